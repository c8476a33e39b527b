#include "ulfe/vol/filters.hpp"

#include <cmath>

namespace ulfe {
namespace vol {

namespace {

// reflect index into [0, n): ..., 2, 1, 0 | 0, 1, ..., n-1 | n-1, n-2, ...
index_t reflect(index_t i, index_t n) {
  if (n == 1) return 0;
  const index_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const index_t radius = static_cast<index_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (index_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (static_cast<double>(i) / sigma) * (static_cast<double>(i) / sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

// Convolve along one axis of (D,H,W); axis 0 = D, 1 = H, 2 = W.
Tensor<real_t> convolve_axis(const Tensor<real_t>& v, const std::vector<double>& k, int axis) {
  const index_t D = v.dim(0), H = v.dim(1), W = v.dim(2);
  const index_t radius = static_cast<index_t>(k.size() / 2);
  Tensor<real_t> out(v.shape());
  const index_t n = axis == 0 ? D : axis == 1 ? H : W;
  for (index_t d = 0; d < D; ++d)
    for (index_t h = 0; h < H; ++h)
      for (index_t w = 0; w < W; ++w) {
        double acc = 0;
        const index_t c = axis == 0 ? d : axis == 1 ? h : w;
        for (index_t j = -radius; j <= radius; ++j) {
          const index_t s = reflect(c + j, n);
          const index_t sd = axis == 0 ? s : d, sh = axis == 1 ? s : h, sw = axis == 2 ? s : w;
          acc += k[static_cast<std::size_t>(j + radius)] * static_cast<double>(v.at3(sd, sh, sw));
        }
        out.at3(d, h, w) = static_cast<real_t>(acc);
      }
  return out;
}

}  // namespace

Tensor<real_t> gaussian_blur(const Tensor<real_t>& v, double sigma) {
  if (v.rank() != 3) throw std::invalid_argument("gaussian_blur: expects (D,H,W)");
  if (sigma <= 0) return v;
  const auto k = gaussian_kernel(sigma);
  Tensor<real_t> out = convolve_axis(v, k, 0);
  out = convolve_axis(out, k, 1);
  return convolve_axis(out, k, 2);
}

Tensor<real_t> downsample_box(const Tensor<real_t>& v, index_t factor) {
  if (v.rank() != 3) throw std::invalid_argument("downsample_box: expects (D,H,W)");
  if (factor < 1) throw std::invalid_argument("downsample_box: factor must be >= 1");
  if (factor == 1) return v;
  const index_t D = v.dim(0), H = v.dim(1), W = v.dim(2);
  if (D % factor || H % factor || W % factor)
    throw std::invalid_argument("downsample_box: extents must divide by factor");
  Tensor<real_t> out(Shape{D / factor, H / factor, W / factor});
  const double inv = 1.0 / static_cast<double>(factor * factor * factor);
  for (index_t d = 0; d < D / factor; ++d)
    for (index_t h = 0; h < H / factor; ++h)
      for (index_t w = 0; w < W / factor; ++w) {
        double acc = 0;
        for (index_t dd = 0; dd < factor; ++dd)
          for (index_t hh = 0; hh < factor; ++hh)
            for (index_t ww = 0; ww < factor; ++ww)
              acc += static_cast<double>(v.at3(d * factor + dd, h * factor + hh, w * factor + ww));
        out.at3(d, h, w) = static_cast<real_t>(acc * inv);
      }
  return out;
}

Tensor<real_t> resize_volume(const Tensor<real_t>& v, index_t od, index_t oh, index_t ow) {
  if (v.rank() != 3) throw std::invalid_argument("resize_volume: expects (D,H,W)");
  const index_t D = v.dim(0), H = v.dim(1), W = v.dim(2);
  if (od == D && oh == H && ow == W) return v;
  auto axis = [](index_t in_n, index_t out_n, index_t o, index_t& i0, index_t& i1, double& w1) {
    double p = (static_cast<double>(o) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
    if (p < 0) p = 0;
    if (p > static_cast<double>(in_n - 1)) p = static_cast<double>(in_n - 1);
    i0 = static_cast<index_t>(p);
    i1 = std::min(i0 + 1, in_n - 1);
    w1 = p - static_cast<double>(i0);
  };
  Tensor<real_t> out(Shape{od, oh, ow});
  for (index_t d = 0; d < od; ++d) {
    index_t d0, d1;
    double wd;
    axis(D, od, d, d0, d1, wd);
    for (index_t h = 0; h < oh; ++h) {
      index_t h0, h1;
      double wh;
      axis(H, oh, h, h0, h1, wh);
      for (index_t w = 0; w < ow; ++w) {
        index_t w0, w1i;
        double ww;
        axis(W, ow, w, w0, w1i, ww);
        const double v00 = (1 - ww) * v.at3(d0, h0, w0) + ww * v.at3(d0, h0, w1i);
        const double v01 = (1 - ww) * v.at3(d0, h1, w0) + ww * v.at3(d0, h1, w1i);
        const double v10 = (1 - ww) * v.at3(d1, h0, w0) + ww * v.at3(d1, h0, w1i);
        const double v11 = (1 - ww) * v.at3(d1, h1, w0) + ww * v.at3(d1, h1, w1i);
        out.at3(d, h, w) =
            static_cast<real_t>((1 - wd) * ((1 - wh) * v00 + wh * v01) + wd * ((1 - wh) * v10 + wh * v11));
      }
    }
  }
  return out;
}

}  // namespace vol
}  // namespace ulfe
