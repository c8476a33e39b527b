#pragma once

#include <memory>
#include <vector>

#include "ulfe/nn/ops.hpp"

namespace ulfe {
namespace nn {

enum class Pad { zero, reflect };

namespace detail {

// Per-axis source index for (output position, kernel offset); -1 means zero-fill.
inline std::vector<index_t> conv_axis_index(index_t in, index_t out, index_t k, index_t stride, index_t pad,
                                            Pad mode) {
  std::vector<index_t> idx(static_cast<std::size_t>(out * k));
  for (index_t o = 0; o < out; ++o)
    for (index_t j = 0; j < k; ++j) {
      index_t i = o * stride - pad + j;
      if (mode == Pad::reflect) {
        if (i < 0) i = -i;
        if (i >= in) i = 2 * in - 2 - i;
        if (i < 0 || i >= in) throw std::invalid_argument("conv3d: reflect pad exceeds extent");
      } else if (i < 0 || i >= in) {
        i = -1;
      }
      idx[static_cast<std::size_t>(o * k + j)] = i;
    }
  return idx;
}

template <typename S>
struct ConvPlan {
  index_t cin, cout, k, sd, sh, sw;  // sd/sh/sw: input spatial dims
  index_t od, oh, ow;
  std::vector<index_t> id, ih, iw;  // per-axis gather tables
  index_t rows() const { return cin * k * k * k; }
  index_t cols() const { return od * oh * ow; }

  // Fill col-major-on-columns im2col block for output columns [c0, c0+n).
  void gather(const S* x, index_t c0, index_t n, S* col) const {
    const index_t hw = sh * sw, ohw = oh * ow;
    for (index_t ci = 0; ci < cin; ++ci) {
      const S* xc = x + ci * sd * hw;
      for (index_t jd = 0; jd < k; ++jd)
        for (index_t jh = 0; jh < k; ++jh)
          for (index_t jw = 0; jw < k; ++jw) {
            const index_t row = ((ci * k + jd) * k + jh) * k + jw;
            S* dst = col + row * n;
            for (index_t c = 0; c < n; ++c) {
              const index_t pos = c0 + c;
              const index_t pd = id[static_cast<std::size_t>((pos / ohw) * k + jd)];
              const index_t ph = ih[static_cast<std::size_t>(((pos / ow) % oh) * k + jh)];
              const index_t pw = iw[static_cast<std::size_t>((pos % ow) * k + jw)];
              dst[c] = (pd < 0 || ph < 0 || pw < 0) ? S(0) : xc[pd * hw + ph * sw + pw];
            }
          }
    }
  }

  // Scatter-add the transpose of gather: col block -> input gradient.
  void scatter(const S* col, index_t c0, index_t n, S* gx) const {
    const index_t hw = sh * sw, ohw = oh * ow;
    for (index_t ci = 0; ci < cin; ++ci) {
      S* gc = gx + ci * sd * hw;
      for (index_t jd = 0; jd < k; ++jd)
        for (index_t jh = 0; jh < k; ++jh)
          for (index_t jw = 0; jw < k; ++jw) {
            const index_t row = ((ci * k + jd) * k + jh) * k + jw;
            const S* src = col + row * n;
            for (index_t c = 0; c < n; ++c) {
              const index_t pos = c0 + c;
              const index_t pd = id[static_cast<std::size_t>((pos / ohw) * k + jd)];
              const index_t ph = ih[static_cast<std::size_t>(((pos / ow) % oh) * k + jh)];
              const index_t pw = iw[static_cast<std::size_t>((pos % ow) * k + jw)];
              if (pd >= 0 && ph >= 0 && pw >= 0) gc[pd * hw + ph * sw + pw] += src[c];
            }
          }
    }
  }

  index_t chunk_cols() const {
    const index_t budget = index_t(4) << 20;  // elements per im2col block
    return std::max<index_t>(1, std::min(cols(), budget / std::max<index_t>(1, rows())));
  }
};

}  // namespace detail

/// 3D convolution: x (Cin, D, H, W), w (Cout, Cin, k, k, k), optional bias (Cout).
/// Uniform kernel/stride/pad per axis. Pass a null Var to skip the bias.
template <typename S>
Var<S> conv3d(const Var<S>& x, const Var<S>& w, const Var<S>& b, index_t stride, index_t pad,
              Pad mode = Pad::zero) {
  if (x->value.rank() != 4 || w->value.rank() != 5)
    throw std::invalid_argument("conv3d: expects x (C,D,H,W), w (Cout,Cin,k,k,k)");
  if (w->value.dim(1) != x->value.dim(0))
    throw std::invalid_argument("conv3d: channel mismatch");
  if (w->value.dim(2) != w->value.dim(3) || w->value.dim(2) != w->value.dim(4))
    throw std::invalid_argument("conv3d: kernel must be cubic");

  auto plan = std::make_shared<detail::ConvPlan<S>>();
  plan->cin = x->value.dim(0);
  plan->cout = w->value.dim(0);
  plan->k = w->value.dim(2);
  plan->sd = x->value.dim(1);
  plan->sh = x->value.dim(2);
  plan->sw = x->value.dim(3);
  auto out_extent = [&](index_t in) {
    const index_t numer = in + 2 * pad - plan->k;
    if (numer < 0)
      throw std::invalid_argument("conv3d: extent " + std::to_string(in) + " smaller than k=" +
                                  std::to_string(plan->k) + " at p=" + std::to_string(pad));
    return numer / stride + 1;  // floor: trailing positions that do not fit are dropped
  };
  plan->od = out_extent(plan->sd);
  plan->oh = out_extent(plan->sh);
  plan->ow = out_extent(plan->sw);
  plan->id = detail::conv_axis_index(plan->sd, plan->od, plan->k, stride, pad, mode);
  plan->ih = detail::conv_axis_index(plan->sh, plan->oh, plan->k, stride, pad, mode);
  plan->iw = detail::conv_axis_index(plan->sw, plan->ow, plan->k, stride, pad, mode);

  const index_t rows = plan->rows(), cols = plan->cols(), chunk = plan->chunk_cols();
  const bool has_bias = static_cast<bool>(b);
  if (has_bias && b->value.numel() != plan->cout)
    throw std::invalid_argument("conv3d: bias must have Cout elements");

  Tensor<S> y(Shape{plan->cout, plan->od, plan->oh, plan->ow});
  {
    AlignedVec<S> col(static_cast<std::size_t>(rows * chunk));
    for (index_t c0 = 0; c0 < cols; c0 += chunk) {
      const index_t n = std::min(chunk, cols - c0);
      plan->gather(x->value.data(), c0, n, col.data());
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> cm(col.data(), rows, n);
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
                 Eigen::OuterStride<>>
          ym(y.data() + c0, plan->cout, n, Eigen::OuterStride<>(cols));
      ym.noalias() = w->value.mat(plan->cout, rows) * cm;
    }
    if (has_bias)
      for (index_t co = 0; co < plan->cout; ++co) {
        S* yr = y.data() + co * cols;
        const S bv = b->value[co];
        for (index_t i = 0; i < cols; ++i) yr[i] += bv;
      }
  }

  std::vector<Var<S>> parents = has_bias ? std::vector<Var<S>>{x, w, b} : std::vector<Var<S>>{x, w};
  return make_node<S>("conv3d", std::move(y), parents, [plan, has_bias](Node<S>& n) {
    const index_t rows = plan->rows(), cols = plan->cols(), chunk = plan->chunk_cols();
    auto& xn = *n.parents[0];
    auto& wn = *n.parents[1];
    const bool need_x = xn.requires_grad, need_w = wn.requires_grad;
    if (need_x) xn.ensure_grad();
    if (need_w) wn.ensure_grad();
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    if (need_x || need_w) {
      AlignedVec<S> col(static_cast<std::size_t>(rows * chunk));
      for (index_t c0 = 0; c0 < cols; c0 += chunk) {
        const index_t n_cols = std::min(chunk, cols - c0);
        Eigen::Map<const Mat, 0, Eigen::OuterStride<>> gy(n.grad.data() + c0, plan->cout, n_cols,
                                                          Eigen::OuterStride<>(cols));
        if (need_w) {
          plan->gather(xn.value.data(), c0, n_cols, col.data());
          Eigen::Map<Mat> cm(col.data(), rows, n_cols);
          wn.grad.mat(plan->cout, rows).noalias() += gy * cm.transpose();
        }
        if (need_x) {
          Eigen::Map<Mat> cm(col.data(), rows, n_cols);
          cm.noalias() = wn.value.mat(plan->cout, rows).transpose() * gy;
          plan->scatter(col.data(), c0, n_cols, xn.grad.data());
        }
      }
    }
    if (has_bias && n.parents[2]->requires_grad) {
      auto& gb = n.parents[2]->ensure_grad();
      for (index_t co = 0; co < plan->cout; ++co) {
        double s = 0;
        const S* gr = n.grad.data() + co * cols;
        for (index_t i = 0; i < cols; ++i) s += static_cast<double>(gr[i]);
        gb[co] += static_cast<S>(s);
      }
    }
  });
}

namespace detail {

struct ResizeAxis {
  std::vector<index_t> i0, i1;
  std::vector<double> w1;  // weight of i1; weight of i0 is 1 - w1
};

// Half-pixel-center sampling: in = (out + 0.5) * in_n / out_n - 0.5, clamped.
inline ResizeAxis resize_axis(index_t in_n, index_t out_n) {
  ResizeAxis a;
  a.i0.resize(static_cast<std::size_t>(out_n));
  a.i1.resize(static_cast<std::size_t>(out_n));
  a.w1.resize(static_cast<std::size_t>(out_n));
  const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
  for (index_t o = 0; o < out_n; ++o) {
    double p = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (p < 0) p = 0;
    if (p > static_cast<double>(in_n - 1)) p = static_cast<double>(in_n - 1);
    const index_t lo = static_cast<index_t>(p);
    a.i0[static_cast<std::size_t>(o)] = lo;
    a.i1[static_cast<std::size_t>(o)] = std::min(lo + 1, in_n - 1);
    a.w1[static_cast<std::size_t>(o)] = p - static_cast<double>(lo);
  }
  return a;
}

}  // namespace detail

/// Trilinear resize of (C, D, H, W) to (C, od, oh, ow) with half-pixel centers.
template <typename S>
Var<S> resize_trilinear(const Var<S>& x, index_t od, index_t oh, index_t ow) {
  if (x->value.rank() != 4) throw std::invalid_argument("resize_trilinear: expects (C,D,H,W)");
  const index_t C = x->value.dim(0), D = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (od == D && oh == H && ow == W) return x;
  auto ad = std::make_shared<detail::ResizeAxis>(detail::resize_axis(D, od));
  auto ah = std::make_shared<detail::ResizeAxis>(detail::resize_axis(H, oh));
  auto aw = std::make_shared<detail::ResizeAxis>(detail::resize_axis(W, ow));
  Tensor<S> y(Shape{C, od, oh, ow});
  const index_t hw = H * W;
  for (index_t c = 0; c < C; ++c) {
    const S* xc = x->value.data() + c * D * hw;
    S* yc = y.data() + c * od * oh * ow;
    for (index_t d = 0; d < od; ++d) {
      const index_t d0 = ad->i0[static_cast<std::size_t>(d)], d1 = ad->i1[static_cast<std::size_t>(d)];
      const double wd = ad->w1[static_cast<std::size_t>(d)];
      for (index_t h = 0; h < oh; ++h) {
        const index_t h0 = ah->i0[static_cast<std::size_t>(h)], h1 = ah->i1[static_cast<std::size_t>(h)];
        const double wh = ah->w1[static_cast<std::size_t>(h)];
        for (index_t w = 0; w < ow; ++w) {
          const index_t w0 = aw->i0[static_cast<std::size_t>(w)], w1i = aw->i1[static_cast<std::size_t>(w)];
          const double ww = aw->w1[static_cast<std::size_t>(w)];
          const double v00 = (1 - ww) * xc[d0 * hw + h0 * W + w0] + ww * xc[d0 * hw + h0 * W + w1i];
          const double v01 = (1 - ww) * xc[d0 * hw + h1 * W + w0] + ww * xc[d0 * hw + h1 * W + w1i];
          const double v10 = (1 - ww) * xc[d1 * hw + h0 * W + w0] + ww * xc[d1 * hw + h0 * W + w1i];
          const double v11 = (1 - ww) * xc[d1 * hw + h1 * W + w0] + ww * xc[d1 * hw + h1 * W + w1i];
          yc[(d * oh + h) * ow + w] =
              static_cast<S>((1 - wd) * ((1 - wh) * v00 + wh * v01) + wd * ((1 - wh) * v10 + wh * v11));
        }
      }
    }
  }
  return make_node<S>("resize_trilinear", std::move(y), {x}, [C, D, H, W, od, oh, ow, ad, ah, aw](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    auto& gx = n.parents[0]->ensure_grad();
    const index_t hw = H * W;
    for (index_t c = 0; c < C; ++c) {
      S* gc = gx.data() + c * D * hw;
      const S* gy = n.grad.data() + c * od * oh * ow;
      for (index_t d = 0; d < od; ++d) {
        const index_t d0 = ad->i0[static_cast<std::size_t>(d)], d1 = ad->i1[static_cast<std::size_t>(d)];
        const double wd = ad->w1[static_cast<std::size_t>(d)];
        for (index_t h = 0; h < oh; ++h) {
          const index_t h0 = ah->i0[static_cast<std::size_t>(h)], h1 = ah->i1[static_cast<std::size_t>(h)];
          const double wh = ah->w1[static_cast<std::size_t>(h)];
          for (index_t w = 0; w < ow; ++w) {
            const index_t w0 = aw->i0[static_cast<std::size_t>(w)],
                          w1i = aw->i1[static_cast<std::size_t>(w)];
            const double ww = aw->w1[static_cast<std::size_t>(w)];
            const double g = static_cast<double>(gy[(d * oh + h) * ow + w]);
            gc[d0 * hw + h0 * W + w0] += static_cast<S>(g * (1 - wd) * (1 - wh) * (1 - ww));
            gc[d0 * hw + h0 * W + w1i] += static_cast<S>(g * (1 - wd) * (1 - wh) * ww);
            gc[d0 * hw + h1 * W + w0] += static_cast<S>(g * (1 - wd) * wh * (1 - ww));
            gc[d0 * hw + h1 * W + w1i] += static_cast<S>(g * (1 - wd) * wh * ww);
            gc[d1 * hw + h0 * W + w0] += static_cast<S>(g * wd * (1 - wh) * (1 - ww));
            gc[d1 * hw + h0 * W + w1i] += static_cast<S>(g * wd * (1 - wh) * ww);
            gc[d1 * hw + h1 * W + w0] += static_cast<S>(g * wd * wh * (1 - ww));
            gc[d1 * hw + h1 * W + w1i] += static_cast<S>(g * wd * wh * ww);
          }
        }
      }
    }
  });
}

}  // namespace nn
}  // namespace ulfe
