#pragma once

#include "ulfe/nn/ops.hpp"

// Index-map helpers for moving between (C, D, H, W) feature maps and (N, C) token
// matrices, and for tail reflect-padding to divisibility constraints.

namespace ulfe::nn {

// Pads the tail of each spatial axis up to (Dp, Hp, Wp) by mirror reflection
// (i >= n reads 2n-2-i); requires pad < extent per axis.
template <typename S>
Var<S> pad_spatial_reflect(const Var<S>& x, index_t Dp, index_t Hp, index_t Wp) {
  if (x->value.rank() != 4) throw std::invalid_argument("pad_spatial_reflect: expects (C, D, H, W)");
  const index_t C = x->value.dim(0), D = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (Dp < D || Hp < H || Wp < W) throw std::invalid_argument("pad_spatial_reflect: target smaller than input");
  if (Dp == D && Hp == H && Wp == W) return x;
  if (Dp - D >= D || Hp - H >= H || Wp - W >= W)
    throw std::invalid_argument("pad_spatial_reflect: pad exceeds extent");
  auto map = std::make_shared<std::vector<index_t>>();
  map->reserve(static_cast<std::size_t>(C * Dp * Hp * Wp));
  auto mir = [](index_t i, index_t n) { return i < n ? i : 2 * n - 2 - i; };
  for (index_t c = 0; c < C; ++c)
    for (index_t d = 0; d < Dp; ++d)
      for (index_t h = 0; h < Hp; ++h)
        for (index_t w = 0; w < Wp; ++w)
          map->push_back(((c * D + mir(d, D)) * H + mir(h, H)) * W + mir(w, W));
  return remap(x, map, Shape{C, Dp, Hp, Wp});
}

// Leading-corner crop back to (D, H, W).
template <typename S>
Var<S> crop_spatial(const Var<S>& x, index_t D, index_t H, index_t W) {
  Var<S> y = x;
  if (y->value.dim(1) != D) y = narrow(y, 1, 0, D);
  if (y->value.dim(2) != H) y = narrow(y, 2, 0, H);
  if (y->value.dim(3) != W) y = narrow(y, 3, 0, W);
  return y;
}

// (C, D, H, W) -> (N, C) with N = D*H*W; token order is spatial row-major.
template <typename S>
Var<S> tokens_from_spatial(const Var<S>& x) {
  if (x->value.rank() != 4) throw std::invalid_argument("tokens_from_spatial: expects (C, D, H, W)");
  const index_t C = x->value.dim(0);
  const index_t N = x->value.numel() / C;
  auto map = std::make_shared<std::vector<index_t>>();
  map->reserve(static_cast<std::size_t>(N * C));
  for (index_t t = 0; t < N; ++t)
    for (index_t c = 0; c < C; ++c) map->push_back(c * N + t);
  return remap(x, map, Shape{N, C});
}

// (N, C) -> (C, D, H, W); the inverse of tokens_from_spatial.
template <typename S>
Var<S> spatial_from_tokens(const Var<S>& t, index_t D, index_t H, index_t W) {
  if (t->value.rank() != 2) throw std::invalid_argument("spatial_from_tokens: expects (N, C)");
  const index_t N = t->value.dim(0), C = t->value.dim(1);
  if (N != D * H * W) throw std::invalid_argument("spatial_from_tokens: token count mismatch");
  auto map = std::make_shared<std::vector<index_t>>();
  map->reserve(static_cast<std::size_t>(N * C));
  for (index_t c = 0; c < C; ++c)
    for (index_t i = 0; i < N; ++i) map->push_back(i * C + c);
  return remap(t, map, Shape{C, D, H, W});
}

}  // namespace ulfe::nn
