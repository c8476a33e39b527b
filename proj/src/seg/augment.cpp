#include "ulfe/seg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ulfe::seg {

namespace {

void mat_mul3(const double a[9], const double b[9], double out[9]) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      out[i * 3 + j] = s;
    }
}

// Source coordinate in input space for output voxel (d,h,w).
inline void source_coord(const SpatialTransform& t, const index_t n[3], index_t d, index_t h,
                         index_t w, double q[3]) {
  double p[3] = {static_cast<double>(d), static_cast<double>(h), static_cast<double>(w)};
  for (int a = 0; a < 3; ++a)
    if (t.flip[a]) p[a] = static_cast<double>(n[a] - 1) - p[a];
  for (int a = 0; a < 3; ++a) {
    const double c = 0.5 * static_cast<double>(n[a] - 1);
    p[a] -= c;
  }
  for (int i = 0; i < 3; ++i) {
    q[i] = t.a_inv[i * 3 + 0] * p[0] + t.a_inv[i * 3 + 1] * p[1] + t.a_inv[i * 3 + 2] * p[2];
    q[i] += 0.5 * static_cast<double>(n[i] - 1) - t.shift[i];
  }
}

template <typename S, bool Nearest>
Tensor<S> resample_impl(const Tensor<S>& chan, const SpatialTransform& t) {
  if (chan.rank() != 3) throw std::invalid_argument("resample: expects a (D,H,W) channel");
  const index_t n[3] = {chan.dim(0), chan.dim(1), chan.dim(2)};
  Tensor<S> out(chan.shape());
  const index_t HW = n[1] * n[2];
  auto inside = [&](index_t a, index_t i) { return i >= 0 && i < n[static_cast<int>(a)]; };
  for (index_t d = 0; d < n[0]; ++d)
    for (index_t h = 0; h < n[1]; ++h)
      for (index_t w = 0; w < n[2]; ++w) {
        double q[3];
        source_coord(t, n, d, h, w, q);
        S v;
        if constexpr (Nearest) {
          const index_t qi[3] = {static_cast<index_t>(std::llround(q[0])),
                                 static_cast<index_t>(std::llround(q[1])),
                                 static_cast<index_t>(std::llround(q[2]))};
          v = (inside(0, qi[0]) && inside(1, qi[1]) && inside(2, qi[2]))
                  ? chan[(qi[0] * n[1] + qi[1]) * n[2] + qi[2]]
                  : S(0);
        } else {
          double acc = 0;
          const index_t f[3] = {static_cast<index_t>(std::floor(q[0])),
                                static_cast<index_t>(std::floor(q[1])),
                                static_cast<index_t>(std::floor(q[2]))};
          const double r[3] = {q[0] - static_cast<double>(f[0]), q[1] - static_cast<double>(f[1]),
                               q[2] - static_cast<double>(f[2])};
          for (int b = 0; b < 8; ++b) {
            const index_t i0 = f[0] + ((b >> 2) & 1), i1 = f[1] + ((b >> 1) & 1), i2 = f[2] + (b & 1);
            const double wgt = (((b >> 2) & 1) ? r[0] : 1 - r[0]) * (((b >> 1) & 1) ? r[1] : 1 - r[1]) *
                               ((b & 1) ? r[2] : 1 - r[2]);
            if (wgt == 0.0) continue;  // keeps integer-grid transforms exact
            if (inside(0, i0) && inside(1, i1) && inside(2, i2))
              acc += wgt * static_cast<double>(chan[i0 * HW + i1 * n[2] + i2]);
          }
          v = static_cast<S>(acc);
        }
        out[(d * n[1] + h) * n[2] + w] = v;
      }
  return out;
}

}  // namespace

SpatialTransform draw_transform(const AugmentationPolicy& policy, const Shape& spatial, Rng& rng) {
  if (spatial.size() != 3) throw std::invalid_argument("draw_transform: expects (D,H,W) extents");
  if (!(policy.scale_min > 0 && policy.scale_min <= policy.scale_max))
    throw std::invalid_argument("draw_transform: need 0 < scale_min <= scale_max");
  SpatialTransform t;

  // fixed draw order: angles (d,h,w), scale, shifts (d,h,w), flips
  const double rd = rng.uniform(-policy.rot_max_rad, policy.rot_max_rad);
  const double rh = rng.uniform(-policy.rot_max_rad, policy.rot_max_rad);
  const double rw = rng.uniform(-policy.rot_max_rad, policy.rot_max_rad);
  const double s = rng.uniform(policy.scale_min, policy.scale_max);
  for (int a = 0; a < 3; ++a)
    t.shift[a] = rng.uniform(-policy.translate_max_frac, policy.translate_max_frac) *
                 static_cast<double>(spatial[static_cast<std::size_t>(a)]);
  for (int a : policy.flip_axes) {
    if (a < 0 || a > 2) throw std::invalid_argument("draw_transform: flip axis out of range");
    t.flip[a] = rng.bernoulli(0.5);
  }

  const double cd = std::cos(rd), sd = std::sin(rd);
  const double ch = std::cos(rh), sh = std::sin(rh);
  const double cw = std::cos(rw), sw = std::sin(rw);
  const double rx[9] = {1, 0, 0, 0, cd, -sd, 0, sd, cd};
  const double ry[9] = {ch, 0, sh, 0, 1, 0, -sh, 0, ch};
  const double rz[9] = {cw, -sw, 0, sw, cw, 0, 0, 0, 1};
  double rot[9], tmp[9];
  mat_mul3(ry, rx, tmp);
  mat_mul3(rz, tmp, rot);
  // forward map is s * rot; its inverse is rot^T / s
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.a_inv[i * 3 + j] = rot[j * 3 + i] / s;
  return t;
}

Tensor<real_t> resample(const Tensor<real_t>& chan, const SpatialTransform& t, bool nearest) {
  return nearest ? resample_impl<real_t, true>(chan, t) : resample_impl<real_t, false>(chan, t);
}

Tensor<std::uint8_t> resample_labels(const Tensor<std::uint8_t>& labels, const SpatialTransform& t) {
  return resample_impl<std::uint8_t, true>(labels, t);
}

vol::Subject augment(const vol::Subject& s, const AugmentationPolicy& policy, std::uint64_t seed) {
  if (!policy.enabled) return s;
  if (s.ulf.empty()) throw std::invalid_argument("augment: subject has no input volumes");
  Rng rng(derive_seed(seed, 0x6175676d));  // "augm"
  const Shape& vs = s.ulf.begin()->second.data.shape();
  const auto t = draw_transform(policy, vs, rng);

  vol::Subject out;
  out.id = s.id;
  for (const auto& [name, v] : s.ulf) {  // map order is sorted, so draws are reproducible
    const double gain = 1.0 + rng.uniform(-policy.intensity_scale_max, policy.intensity_scale_max);
    const double bias = rng.uniform(-policy.intensity_shift_max, policy.intensity_shift_max);
    vol::Volume r{resample(v.data, t), v.spacing, v.norm_state};
    for (index_t i = 0; i < r.data.numel(); ++i) {
      const double y = gain * static_cast<double>(r.data[i]) + bias;
      r.data[i] = static_cast<real_t>(std::clamp(y, 0.0, 1.0));
    }
    out.ulf.emplace(name, std::move(r));
  }
  for (const auto& [name, v] : s.hf)
    out.hf.emplace(name, vol::Volume{resample(v.data, t), v.spacing, v.norm_state});
  if (s.labelmap) out.labelmap = resample_labels(*s.labelmap, t);
  if (s.bg_mask) out.bg_mask = resample_labels(*s.bg_mask, t);
  if (s.void_mask) out.void_mask = resample_labels(*s.void_mask, t);
  return out;
}

}  // namespace ulfe::seg
