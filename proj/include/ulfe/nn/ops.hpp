#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "ulfe/nn/graph.hpp"

namespace ulfe {
namespace nn {

template <typename S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a->value.shape() != b->value.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->value.shape()) + " vs " +
                                shape_str(b->value.shape()));
}

template <typename S>
S scalar_of(const Var<S>& a) {
  if (a->value.numel() != 1) throw std::invalid_argument("scalar_of: not a scalar");
  return a->value[0];
}

// ---- elementwise binary ----

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "add");
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr() + b->value.arr();
  return make_node<S>("add", std::move(v), {a, b}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr();
    if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad().arr() += n.grad.arr();
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "sub");
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr() - b->value.arr();
  return make_node<S>("sub", std::move(v), {a, b}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr();
    if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad().arr() -= n.grad.arr();
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "mul");
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr() * b->value.arr();
  return make_node<S>("mul", std::move(v), {a, b}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr() * n.parents[1]->value.arr();
    if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad().arr() += n.grad.arr() * n.parents[0]->value.arr();
  });
}

template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "div");
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr() / b->value.arr();
  return make_node<S>("div", std::move(v), {a, b}, [](Node<S>& n) {
    const auto& bv = n.parents[1]->value.arr();
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr() / bv;
    if (n.parents[1]->requires_grad)
      n.parents[1]->ensure_grad().arr() -= n.grad.arr() * n.parents[0]->value.arr() / (bv * bv);
  });
}

// ---- elementwise with scalar ----

template <typename S>
Var<S> add_s(const Var<S>& a, S s) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr() + s;
  return make_node<S>("add_s", std::move(v), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr();
  });
}

template <typename S>
Var<S> mul_s(const Var<S>& a, S s) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr() * s;
  return make_node<S>("mul_s", std::move(v), {a}, [s](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr() * s;
  });
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  return mul_s(a, S(-1));
}

/// max(a, s) elementwise; subgradient 0 at the clamp boundary and below.
template <typename S>
Var<S> clamp_min(const Var<S>& a, S s) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr().max(s);
  return make_node<S>("clamp_min", std::move(v), {a}, [s](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& g = n.parents[0]->ensure_grad();
    const auto& av = n.parents[0]->value;
    for (index_t i = 0; i < av.numel(); ++i)
      if (av[i] > s) g[i] += n.grad[i];
  });
}

/// min(a, s) elementwise; subgradient 0 at and above the clamp boundary.
template <typename S>
Var<S> clamp_max(const Var<S>& a, S s) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr().min(s);
  return make_node<S>("clamp_max", std::move(v), {a}, [s](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& g = n.parents[0]->ensure_grad();
    const auto& av = n.parents[0]->value;
    for (index_t i = 0; i < av.numel(); ++i)
      if (av[i] < s) g[i] += n.grad[i];
  });
}

// ---- elementwise unary ----

template <typename S>
Var<S> gelu(const Var<S>& a) {
  Tensor<S> v(a->value.shape());
  const auto& av = a->value;
  for (index_t i = 0; i < av.numel(); ++i) {
    const double x = static_cast<double>(av[i]);
    v[i] = static_cast<S>(0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)));
  }
  return make_node<S>("gelu", std::move(v), {a}, [](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& g = n.parents[0]->ensure_grad();
    const auto& av = n.parents[0]->value;
    for (index_t i = 0; i < av.numel(); ++i) {
      const double x = static_cast<double>(av[i]);
      const double d = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) +
                       x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      g[i] += n.grad[i] * static_cast<S>(d);
    }
  });
}

template <typename S>
Var<S> exp(const Var<S>& a) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr().exp();
  return make_node<S>("exp", std::move(v), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr() * n.value.arr();
  });
}

template <typename S>
Var<S> log(const Var<S>& a) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr().log();
  return make_node<S>("log", std::move(v), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr() / n.parents[0]->value.arr();
  });
}

template <typename S>
Var<S> sqrt(const Var<S>& a) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr().sqrt();
  return make_node<S>("sqrt", std::move(v), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->ensure_grad().arr() += n.grad.arr() / (S(2) * n.value.arr());
  });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr().square();
  return make_node<S>("square", std::move(v), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->ensure_grad().arr() += S(2) * n.grad.arr() * n.parents[0]->value.arr();
  });
}

/// |a|; subgradient 0 at a = 0.
template <typename S>
Var<S> abs(const Var<S>& a) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr().abs();
  return make_node<S>("abs", std::move(v), {a}, [](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& g = n.parents[0]->ensure_grad();
    const auto& av = n.parents[0]->value;
    for (index_t i = 0; i < av.numel(); ++i) {
      if (av[i] > S(0)) g[i] += n.grad[i];
      else if (av[i] < S(0)) g[i] -= n.grad[i];
    }
  });
}

template <typename S>
Var<S> tanh(const Var<S>& a) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr().tanh();
  return make_node<S>("tanh", std::move(v), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->ensure_grad().arr() += n.grad.arr() * (S(1) - n.value.arr().square());
  });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  Tensor<S> v(a->value.shape());
  v.arr() = S(1) / (S(1) + (-a->value.arr()).exp());
  return make_node<S>("sigmoid", std::move(v), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->ensure_grad().arr() += n.grad.arr() * n.value.arr() * (S(1) - n.value.arr());
  });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> v(a->value.shape());
  v.arr() = a->value.arr().max(S(0));
  return make_node<S>("relu", std::move(v), {a}, [](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& g = n.parents[0]->ensure_grad();
    const auto& av = n.parents[0]->value;
    for (index_t i = 0; i < av.numel(); ++i)
      if (av[i] > S(0)) g[i] += n.grad[i];
  });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope) {
  Tensor<S> v(a->value.shape());
  const auto& av = a->value;
  for (index_t i = 0; i < av.numel(); ++i) v[i] = av[i] > S(0) ? av[i] : slope * av[i];
  return make_node<S>("leaky_relu", std::move(v), {a}, [slope](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& g = n.parents[0]->ensure_grad();
    const auto& av = n.parents[0]->value;
    for (index_t i = 0; i < av.numel(); ++i) g[i] += av[i] > S(0) ? n.grad[i] : slope * n.grad[i];
  });
}

// ---- reductions ----

template <typename S>
Var<S> sum(const Var<S>& a) {
  Tensor<S> v(Shape{1});
  v[0] = static_cast<S>(a->value.arr().template cast<double>().sum());
  return make_node<S>("sum", std::move(v), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad[0];
  });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  const index_t cnt = a->value.numel();
  Tensor<S> v(Shape{1});
  v[0] = static_cast<S>(a->value.arr().template cast<double>().sum() / static_cast<double>(cnt));
  return make_node<S>("mean", std::move(v), {a}, [cnt](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad[0] / static_cast<S>(cnt);
  });
}

// ---- matmul ----

/// (M,K) x (K,N) -> (M,N), row-major
template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
    throw std::invalid_argument("matmul: bad shapes " + shape_str(a->value.shape()) + " x " +
                                shape_str(b->value.shape()));
  const index_t M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(1);
  Tensor<S> v(Shape{M, N});
  v.mat(M, N).noalias() = a->value.mat(M, K) * b->value.mat(K, N);
  return make_node<S>("matmul", std::move(v), {a, b}, [M, K, N](Node<S>& n) {
    auto g = n.grad.mat(M, N);
    if (n.parents[0]->requires_grad)
      n.parents[0]->ensure_grad().mat(M, K).noalias() += g * n.parents[1]->value.mat(K, N).transpose();
    if (n.parents[1]->requires_grad)
      n.parents[1]->ensure_grad().mat(K, N).noalias() += n.parents[0]->value.mat(M, K).transpose() * g;
  });
}

// ---- indexing / shape ----

using IndexMap = std::shared_ptr<const std::vector<index_t>>;

/// out[i] = map[i] >= 0 ? a[map[i]] : 0. One op covers crop, pad, flip,
/// cyclic shift, window partition and its inverse, and token reordering.
template <typename S>
Var<S> remap(const Var<S>& a, IndexMap map, Shape out_shape) {
  if (static_cast<index_t>(map->size()) != shape_numel(out_shape))
    throw std::invalid_argument("remap: map size does not match output shape");
  Tensor<S> v(out_shape);
  const auto& av = a->value;
  const auto& m = *map;
  for (std::size_t i = 0; i < m.size(); ++i) v[static_cast<index_t>(i)] = m[i] >= 0 ? av[m[i]] : S(0);
  return make_node<S>("remap", std::move(v), {a}, [map](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& g = n.parents[0]->ensure_grad();
    const auto& m = *map;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i] >= 0) g[m[i]] += n.grad[static_cast<index_t>(i)];
  });
}

template <typename S>
Var<S> reshape(const Var<S>& a, Shape s) {
  Tensor<S> v = a->value.reshaped(s);
  return make_node<S>("reshape", std::move(v), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr();
  });
}

/// Slice of length `len` starting at `start` along `axis`.
template <typename S>
Var<S> narrow(const Var<S>& a, int axis, index_t start, index_t len) {
  const Shape& in = a->value.shape();
  if (axis < 0 || axis >= a->value.rank() || start < 0 || start + len > in[static_cast<std::size_t>(axis)])
    throw std::invalid_argument("narrow: out of range");
  index_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= in[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < a->value.rank(); ++i) inner *= in[static_cast<std::size_t>(i)];
  const index_t in_axis = in[static_cast<std::size_t>(axis)];
  Shape out_shape = in;
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor<S> v(out_shape);
  const S* src = a->value.data();
  S* dst = v.data();
  for (index_t o = 0; o < outer; ++o)
    std::copy_n(src + (o * in_axis + start) * inner, len * inner, dst + o * len * inner);
  return make_node<S>("narrow", std::move(v), {a}, [outer, inner, in_axis, start, len](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& g = n.parents[0]->ensure_grad();
    const S* gs = n.grad.data();
    for (index_t o = 0; o < outer; ++o) {
      S* gd = g.data() + (o * in_axis + start) * inner;
      const S* gr = gs + o * len * inner;
      for (index_t i = 0; i < len * inner; ++i) gd[i] += gr[i];
    }
  });
}

template <typename S>
Var<S> concat(int axis, const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int rank = parts[0]->value.rank();
  if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: bad axis");
  Shape out_shape = parts[0]->value.shape();
  index_t axis_total = 0;
  for (const auto& p : parts) {
    if (p->value.rank() != rank) throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis && p->value.dim(i) != out_shape[static_cast<std::size_t>(i)])
        throw std::invalid_argument("concat: shape mismatch off-axis");
    axis_total += p->value.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  index_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= out_shape[static_cast<std::size_t>(i)];

  Tensor<S> v(out_shape);
  std::vector<index_t> axis_sizes;
  for (const auto& p : parts) axis_sizes.push_back(p->value.dim(axis));
  index_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const index_t ak = axis_sizes[k];
    const S* src = parts[k]->value.data();
    for (index_t o = 0; o < outer; ++o)
      std::copy_n(src + o * ak * inner, ak * inner, v.data() + (o * axis_total + off) * inner);
    off += ak;
  }
  return make_node<S>("concat", std::move(v), parts, [outer, inner, axis_total, axis_sizes](Node<S>& n) {
    index_t off = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      const index_t ak = axis_sizes[k];
      if (n.parents[k]->requires_grad) {
        auto& g = n.parents[k]->ensure_grad();
        for (index_t o = 0; o < outer; ++o) {
          const S* gs = n.grad.data() + (o * axis_total + off) * inner;
          S* gd = g.data() + o * ak * inner;
          for (index_t i = 0; i < ak * inner; ++i) gd[i] += gs[i];
        }
      }
      off += ak;
    }
  });
}

template <typename S>
Var<S> concat(int axis, std::initializer_list<Var<S>> parts) {
  return concat(axis, std::vector<Var<S>>(parts));
}

// ---- softmax / cross-entropy ----

/// Softmax over axis 0 of (C, ...) tensors.
template <typename S>
Var<S> softmax_channels(const Var<S>& a) {
  const index_t C = a->value.dim(0);
  const index_t M = a->value.numel() / C;
  Tensor<S> v(a->value.shape());
  const S* x = a->value.data();
  S* p = v.data();
  for (index_t m = 0; m < M; ++m) {
    S mx = x[m];
    for (index_t c = 1; c < C; ++c) mx = std::max(mx, x[c * M + m]);
    double z = 0;
    for (index_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(x[c * M + m] - mx));
    for (index_t c = 0; c < C; ++c)
      p[c * M + m] = static_cast<S>(std::exp(static_cast<double>(x[c * M + m] - mx)) / z);
  }
  return make_node<S>("softmax_channels", std::move(v), {a}, [C, M](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& gx = n.parents[0]->ensure_grad();
    const S* p = n.value.data();
    const S* g = n.grad.data();
    for (index_t m = 0; m < M; ++m) {
      double dot = 0;
      for (index_t c = 0; c < C; ++c) dot += static_cast<double>(p[c * M + m]) * static_cast<double>(g[c * M + m]);
      for (index_t c = 0; c < C; ++c)
        gx[c * M + m] += p[c * M + m] * (g[c * M + m] - static_cast<S>(dot));
    }
  });
}

/// Mean voxel cross-entropy of (C, ...) logits against integer labels in [0, C).
template <typename S>
Var<S> softmax_ce_mean(const Var<S>& logits, std::shared_ptr<const std::vector<index_t>> labels) {
  const index_t C = logits->value.dim(0);
  const index_t M = logits->value.numel() / C;
  if (static_cast<index_t>(labels->size()) != M)
    throw std::invalid_argument("softmax_ce_mean: label count mismatch");
  const S* x = logits->value.data();
  double total = 0;
  for (index_t m = 0; m < M; ++m) {
    const index_t y = (*labels)[static_cast<std::size_t>(m)];
    if (y < 0 || y >= C) throw std::invalid_argument("softmax_ce_mean: label out of range");
    S mx = x[m];
    for (index_t c = 1; c < C; ++c) mx = std::max(mx, x[c * M + m]);
    double z = 0;
    for (index_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(x[c * M + m] - mx));
    total += std::log(z) - static_cast<double>(x[y * M + m] - mx);
  }
  Tensor<S> v(Shape{1});
  v[0] = static_cast<S>(total / static_cast<double>(M));
  return make_node<S>("softmax_ce_mean", std::move(v), {logits}, [C, M, labels](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& gx = n.parents[0]->ensure_grad();
    const S* x = n.parents[0]->value.data();
    const S g0 = n.grad[0] / static_cast<S>(M);
    for (index_t m = 0; m < M; ++m) {
      const index_t y = (*labels)[static_cast<std::size_t>(m)];
      S mx = x[m];
      for (index_t c = 1; c < C; ++c) mx = std::max(mx, x[c * M + m]);
      double z = 0;
      for (index_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(x[c * M + m] - mx));
      for (index_t c = 0; c < C; ++c) {
        S p = static_cast<S>(std::exp(static_cast<double>(x[c * M + m] - mx)) / z);
        gx[c * M + m] += g0 * (p - (c == y ? S(1) : S(0)));
      }
    }
  });
}

// ---- normalization ----

namespace detail {

// Standardize each row of an implicit (R, E) view; optional affine over columns.
template <typename S>
void standardize_rows_forward(const S* x, S* y, index_t R, index_t E, S eps, std::vector<double>& mu,
                              std::vector<double>& ivar) {
  mu.resize(static_cast<std::size_t>(R));
  ivar.resize(static_cast<std::size_t>(R));
  for (index_t r = 0; r < R; ++r) {
    const S* xr = x + r * E;
    double m = 0;
    for (index_t i = 0; i < E; ++i) m += static_cast<double>(xr[i]);
    m /= static_cast<double>(E);
    double var = 0;
    for (index_t i = 0; i < E; ++i) {
      double d = static_cast<double>(xr[i]) - m;
      var += d * d;
    }
    var /= static_cast<double>(E);
    const double iv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    mu[static_cast<std::size_t>(r)] = m;
    ivar[static_cast<std::size_t>(r)] = iv;
    S* yr = y + r * E;
    for (index_t i = 0; i < E; ++i) yr[i] = static_cast<S>((static_cast<double>(xr[i]) - m) * iv);
  }
}

// dx for y = (x - mu) * ivar given upstream dxhat.
template <typename S>
void standardize_rows_backward(const S* x, const S* dxhat, S* dx_accum, index_t R, index_t E,
                               const std::vector<double>& mu, const std::vector<double>& ivar) {
  for (index_t r = 0; r < R; ++r) {
    const S* xr = x + r * E;
    const S* gr = dxhat + r * E;
    S* dr = dx_accum + r * E;
    const double m = mu[static_cast<std::size_t>(r)];
    const double iv = ivar[static_cast<std::size_t>(r)];
    double sum_g = 0, sum_gx = 0;
    for (index_t i = 0; i < E; ++i) {
      const double g = static_cast<double>(gr[i]);
      sum_g += g;
      sum_gx += g * (static_cast<double>(xr[i]) - m) * iv;
    }
    const double inv_e = 1.0 / static_cast<double>(E);
    for (index_t i = 0; i < E; ++i) {
      const double xhat = (static_cast<double>(xr[i]) - m) * iv;
      const double g = static_cast<double>(gr[i]);
      dr[i] += static_cast<S>(iv * (g - inv_e * sum_g - xhat * inv_e * sum_gx));
    }
  }
}

}  // namespace detail

/// Parameter-free per-channel standardization of (C, D, H, W) over spatial dims.
template <typename S>
Var<S> channel_standardize(const Var<S>& a, S eps) {
  const index_t C = a->value.dim(0);
  const index_t E = a->value.numel() / C;
  Tensor<S> v(a->value.shape());
  auto mu = std::make_shared<std::vector<double>>();
  auto ivar = std::make_shared<std::vector<double>>();
  detail::standardize_rows_forward(a->value.data(), v.data(), C, E, eps, *mu, *ivar);
  return make_node<S>("channel_standardize", std::move(v), {a}, [C, E, mu, ivar](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& gx = n.parents[0]->ensure_grad();
    detail::standardize_rows_backward(n.parents[0]->value.data(), n.grad.data(), gx.data(), C, E, *mu, *ivar);
  });
}

/// y[c, ...] = x[c, ...] * gamma[c] + beta[c]
template <typename S>
Var<S> channel_affine(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta) {
  const index_t C = x->value.dim(0);
  const index_t E = x->value.numel() / C;
  if (gamma->value.numel() != C || beta->value.numel() != C)
    throw std::invalid_argument("channel_affine: gamma/beta must have C elements");
  Tensor<S> v(x->value.shape());
  for (index_t c = 0; c < C; ++c) {
    const S g = gamma->value[c], b = beta->value[c];
    const S* xr = x->value.data() + c * E;
    S* yr = v.data() + c * E;
    for (index_t i = 0; i < E; ++i) yr[i] = xr[i] * g + b;
  }
  return make_node<S>("channel_affine", std::move(v), {x, gamma, beta}, [C, E](Node<S>& n) {
    const S* xv = n.parents[0]->value.data();
    const S* gv = n.grad.data();
    if (n.parents[0]->requires_grad) {
      auto& gx = n.parents[0]->ensure_grad();
      for (index_t c = 0; c < C; ++c) {
        const S g = n.parents[1]->value[c];
        S* d = gx.data() + c * E;
        const S* gr = gv + c * E;
        for (index_t i = 0; i < E; ++i) d[i] += gr[i] * g;
      }
    }
    if (n.parents[1]->requires_grad) {
      auto& gg = n.parents[1]->ensure_grad();
      for (index_t c = 0; c < C; ++c) {
        double s = 0;
        const S* gr = gv + c * E;
        const S* xr = xv + c * E;
        for (index_t i = 0; i < E; ++i) s += static_cast<double>(gr[i]) * static_cast<double>(xr[i]);
        gg[c] += static_cast<S>(s);
      }
    }
    if (n.parents[2]->requires_grad) {
      auto& gb = n.parents[2]->ensure_grad();
      for (index_t c = 0; c < C; ++c) {
        double s = 0;
        const S* gr = gv + c * E;
        for (index_t i = 0; i < E; ++i) s += static_cast<double>(gr[i]);
        gb[c] += static_cast<S>(s);
      }
    }
  });
}

/// y[r, :] = x[r, :] + b for a (N, E) token matrix and (E) bias.
template <typename S>
Var<S> add_rowvec(const Var<S>& x, const Var<S>& b) {
  if (x->value.rank() != 2 || b->value.numel() != x->value.dim(1))
    throw std::invalid_argument("add_rowvec: expects x (N, E), b (E)");
  const index_t N = x->value.dim(0), E = x->value.dim(1);
  Tensor<S> v(x->value.shape());
  for (index_t r = 0; r < N; ++r)
    for (index_t i = 0; i < E; ++i) v[r * E + i] = x->value[r * E + i] + b->value[i];
  return make_node<S>("add_rowvec", std::move(v), {x, b}, [N, E](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().arr() += n.grad.arr();
    if (n.parents[1]->requires_grad) {
      auto& gb = n.parents[1]->ensure_grad();
      for (index_t i = 0; i < E; ++i) {
        double s = 0;
        for (index_t r = 0; r < N; ++r) s += static_cast<double>(n.grad[r * E + i]);
        gb[i] += static_cast<S>(s);
      }
    }
  });
}

/// LayerNorm over the last axis of a (N, E) token matrix.
template <typename S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps) {
  if (x->value.rank() != 2) throw std::invalid_argument("layer_norm: expects (N, E)");
  const index_t N = x->value.dim(0), E = x->value.dim(1);
  if (gamma->value.numel() != E || beta->value.numel() != E)
    throw std::invalid_argument("layer_norm: gamma/beta must have E elements");
  Tensor<S> v(x->value.shape());
  auto mu = std::make_shared<std::vector<double>>();
  auto ivar = std::make_shared<std::vector<double>>();
  detail::standardize_rows_forward(x->value.data(), v.data(), N, E, eps, *mu, *ivar);
  auto xhat = std::make_shared<Tensor<S>>(v);  // pre-affine values
  for (index_t r = 0; r < N; ++r) {
    S* yr = v.data() + r * E;
    for (index_t i = 0; i < E; ++i) yr[i] = yr[i] * gamma->value[i] + beta->value[i];
  }
  return make_node<S>("layer_norm", std::move(v), {x, gamma, beta}, [N, E, mu, ivar, xhat](Node<S>& n) {
    const S* g = n.grad.data();
    if (n.parents[1]->requires_grad) {
      auto& gg = n.parents[1]->ensure_grad();
      for (index_t i = 0; i < E; ++i) {
        double s = 0;
        for (index_t r = 0; r < N; ++r)
          s += static_cast<double>(g[r * E + i]) * static_cast<double>((*xhat)[r * E + i]);
        gg[i] += static_cast<S>(s);
      }
    }
    if (n.parents[2]->requires_grad) {
      auto& gb = n.parents[2]->ensure_grad();
      for (index_t i = 0; i < E; ++i) {
        double s = 0;
        for (index_t r = 0; r < N; ++r) s += static_cast<double>(g[r * E + i]);
        gb[i] += static_cast<S>(s);
      }
    }
    if (n.parents[0]->requires_grad) {
      Tensor<S> dxhat(n.parents[0]->value.shape());
      for (index_t r = 0; r < N; ++r)
        for (index_t i = 0; i < E; ++i) dxhat[r * E + i] = g[r * E + i] * n.parents[1]->value[i];
      auto& gx = n.parents[0]->ensure_grad();
      detail::standardize_rows_backward(n.parents[0]->value.data(), dxhat.data(), gx.data(), N, E, *mu, *ivar);
    }
  });
}

}  // namespace nn
}  // namespace ulfe
