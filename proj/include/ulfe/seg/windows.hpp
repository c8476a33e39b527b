#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "ulfe/nn/ops.hpp"

// Geometry for windowed attention over a (D, H, W) token grid: gather maps that
// reorder packed qkv rows into window-major order (padding rows zero-filled), the
// inverse map back to token order, the relative-position index into a learned bias
// table, and the additive mask hiding padding tokens and cross-region pairs
// introduced by the cyclic shift.

namespace ulfe::seg {

template <typename S>
struct WindowGeometry {
  index_t n_windows = 0, tokens = 0;   // tokens per window
  index_t wd = 0, wh = 0, ww = 0;      // effective per-axis window
  nn::IndexMap qkv_map;                // (nW*T, 3C) <- (N, 3C)
  nn::IndexMap out_map;                // (N, C) <- (nW*T, C)
  nn::IndexMap bias_map;               // (heads*T*T) <- (heads, R) relative-bias table
  std::shared_ptr<const Tensor<S>> mask;  // (nW, T, T) additive, null when unneeded
};

// `window` is the configured cubic window; axes shorter than it use their full
// extent, and such axes are never shifted.
template <typename S>
WindowGeometry<S> build_window_geometry(index_t D, index_t H, index_t W, index_t C, index_t heads,
                                        index_t window, bool shifted) {
  if (window < 1) throw std::invalid_argument("window geometry: window must be positive");
  WindowGeometry<S> g;
  const index_t ext[3] = {D, H, W};
  index_t win[3], shift[3], padded[3];
  for (int a = 0; a < 3; ++a) {
    win[a] = std::min(window, ext[a]);
    shift[a] = (shifted && win[a] < ext[a]) ? win[a] / 2 : 0;
    padded[a] = (ext[a] + win[a] - 1) / win[a] * win[a];
  }
  g.wd = win[0];
  g.wh = win[1];
  g.ww = win[2];
  g.tokens = win[0] * win[1] * win[2];
  const index_t grid[3] = {padded[0] / win[0], padded[1] / win[1], padded[2] / win[2]};
  g.n_windows = grid[0] * grid[1] * grid[2];
  const index_t N = D * H * W;
  const index_t Nw = g.n_windows * g.tokens;

  const bool any_pad = padded[0] != D || padded[1] != H || padded[2] != W;
  const bool any_shift = shift[0] || shift[1] || shift[2];

  // region bins on source coordinates, base-3 per axis (standard seam partition)
  auto bin = [&](index_t x, int a) -> index_t {
    if (shift[a] == 0) return 0;
    if (x < padded[a] - win[a]) return 0;
    if (x < padded[a] - shift[a]) return 1;
    return 2;
  };

  // for each window-order row: source token (or -1), and its region id (-1 = padding)
  std::vector<index_t> src(static_cast<std::size_t>(Nw));
  std::vector<index_t> region(static_cast<std::size_t>(Nw));
  for (index_t pd = 0; pd < padded[0]; ++pd)
    for (index_t ph = 0; ph < padded[1]; ++ph)
      for (index_t pw = 0; pw < padded[2]; ++pw) {
        const index_t wi = ((pd / win[0]) * grid[1] + ph / win[1]) * grid[2] + pw / win[2];
        const index_t ti = ((pd % win[0]) * win[1] + ph % win[1]) * win[2] + pw % win[2];
        const index_t row = wi * g.tokens + ti;
        const index_t od = (pd + shift[0]) % padded[0];
        const index_t oh = (ph + shift[1]) % padded[1];
        const index_t ow = (pw + shift[2]) % padded[2];
        if (od < D && oh < H && ow < W) {
          src[static_cast<std::size_t>(row)] = (od * H + oh) * W + ow;
          region[static_cast<std::size_t>(row)] = (bin(od, 0) * 3 + bin(oh, 1)) * 3 + bin(ow, 2);
        } else {
          src[static_cast<std::size_t>(row)] = -1;
          region[static_cast<std::size_t>(row)] = -1;
        }
      }

  auto qkv = std::make_shared<std::vector<index_t>>();
  qkv->reserve(static_cast<std::size_t>(Nw * 3 * C));
  for (index_t r = 0; r < Nw; ++r)
    for (index_t e = 0; e < 3 * C; ++e)
      qkv->push_back(src[static_cast<std::size_t>(r)] < 0 ? -1 : src[static_cast<std::size_t>(r)] * 3 * C + e);
  g.qkv_map = std::move(qkv);

  auto out = std::make_shared<std::vector<index_t>>(static_cast<std::size_t>(N * C));
  for (index_t r = 0; r < Nw; ++r)
    if (src[static_cast<std::size_t>(r)] >= 0)
      for (index_t e = 0; e < C; ++e)
        (*out)[static_cast<std::size_t>(src[static_cast<std::size_t>(r)] * C + e)] = r * C + e;
  g.out_map = std::move(out);

  // relative offsets indexed with configured-window strides so the table layout is
  // independent of the effective window
  const index_t span = 2 * window - 1;
  auto bias = std::make_shared<std::vector<index_t>>();
  bias->reserve(static_cast<std::size_t>(heads * g.tokens * g.tokens));
  std::vector<index_t> rel(static_cast<std::size_t>(g.tokens * g.tokens));
  for (index_t i = 0; i < g.tokens; ++i) {
    const index_t id = i / (win[1] * win[2]), ih = (i / win[2]) % win[1], iw = i % win[2];
    for (index_t j = 0; j < g.tokens; ++j) {
      const index_t jd = j / (win[1] * win[2]), jh = (j / win[2]) % win[1], jw = j % win[2];
      rel[static_cast<std::size_t>(i * g.tokens + j)] =
          ((id - jd + window - 1) * span + (ih - jh + window - 1)) * span + (iw - jw + window - 1);
    }
  }
  const index_t R = span * span * span;
  for (index_t h = 0; h < heads; ++h)
    for (index_t q = 0; q < g.tokens * g.tokens; ++q)
      bias->push_back(h * R + rel[static_cast<std::size_t>(q)]);
  g.bias_map = std::move(bias);

  if (any_pad || any_shift) {
    Tensor<S> mask(Shape{g.n_windows, g.tokens, g.tokens}, S(0));
    for (index_t w = 0; w < g.n_windows; ++w)
      for (index_t i = 0; i < g.tokens; ++i)
        for (index_t j = 0; j < g.tokens; ++j) {
          const index_t ri = region[static_cast<std::size_t>(w * g.tokens + i)];
          const index_t rj = region[static_cast<std::size_t>(w * g.tokens + j)];
          if (rj < 0 || ri != rj) mask[(w * g.tokens + i) * g.tokens + j] = S(-100);
        }
    g.mask = std::make_shared<const Tensor<S>>(std::move(mask));
  }
  return g;
}

}  // namespace ulfe::seg
