#include "ulfe/phantom/phantom.hpp"

#include <cmath>

#include "ulfe/vol/filters.hpp"

namespace ulfe {
namespace phantom {

using vol::NormState;
using vol::Subject;
using vol::Volume;

std::map<int, std::map<std::string, double>> default_class_means() {
  // class order: 0 background, 1 CSF, 2 GM, 3 WM, 4 skull, 5 scalp
  return {
      {0, {{"t1", 0.00}, {"t2", 0.00}, {"flair", 0.00}}},
      {1, {{"t1", 0.15}, {"t2", 0.90}, {"flair", 0.10}}},
      {2, {{"t1", 0.55}, {"t2", 0.60}, {"flair", 0.65}}},
      {3, {{"t1", 0.85}, {"t2", 0.35}, {"flair", 0.45}}},
      {4, {{"t1", 0.25}, {"t2", 0.20}, {"flair", 0.20}}},
      {5, {{"t1", 0.65}, {"t2", 0.50}, {"flair", 0.55}}},
  };
}

PhantomParams default_phantom_params() {
  PhantomParams p;
  p.class_means = default_class_means();
  return p;
}

void validate_params(const PhantomParams& p) {
  if (p.size < 16) throw std::invalid_argument("phantom: size must be >= 16");
  if (p.downsample_factor < 1 || p.size % p.downsample_factor != 0)
    throw std::invalid_argument("phantom: downsample_factor must divide size");
  if (p.noise_sigma_ulf < 0 || p.blur_sigma_ulf < 0)
    throw std::invalid_argument("phantom: sigmas must be non-negative");
  if (p.void_probability < 0 || p.void_probability > 1)
    throw std::invalid_argument("phantom: void_probability must be in [0,1]");
  for (int cls = 0; cls < vol::kNumClasses; ++cls) {
    auto it = p.class_means.find(cls);
    if (it == p.class_means.end()) throw std::invalid_argument("phantom: class_means missing a class");
    for (const auto& c : vol::contrasts()) {
      auto jt = it->second.find(c);
      if (jt == it->second.end()) throw std::invalid_argument("phantom: class_means missing a contrast");
      if (jt->second < 0 || jt->second > 1)
        throw std::invalid_argument("phantom: class means must lie in [0,1]");
    }
  }
}

namespace {

struct Ellipsoid {
  double cd, ch, cw, rd, rh, rw;
  bool contains(index_t d, index_t h, index_t w) const {
    const double qd = (d - cd) / rd, qh = (h - ch) / rh, qw = (w - cw) / rw;
    return qd * qd + qh * qh + qw * qw <= 1.0;
  }
};

// Nested head geometry, jittered per subject: scalp > skull > CSF > GM > WM.
Tensor<std::uint8_t> make_labelmap(const PhantomParams& p, Rng& rng) {
  const index_t n = p.size;
  const double half = static_cast<double>(n) / 2.0;
  const double c = half - 0.5;
  auto shell = [&](double frac) {
    Ellipsoid e;
    e.cd = c + rng.uniform(-0.02, 0.02) * half;
    e.ch = c + rng.uniform(-0.02, 0.02) * half;
    e.cw = c + rng.uniform(-0.02, 0.02) * half;
    e.rd = frac * half * rng.uniform(0.97, 1.03);
    e.rh = frac * half * rng.uniform(0.92, 0.98);
    e.rw = frac * half * rng.uniform(0.87, 0.93);
    return e;
  };
  const Ellipsoid scalp = shell(0.92), skull = shell(0.82), csf = shell(0.72), gm = shell(0.60),
                  wm = shell(0.42);
  Tensor<std::uint8_t> lab(Shape{n, n, n});
  for (index_t d = 0; d < n; ++d)
    for (index_t h = 0; h < n; ++h)
      for (index_t w = 0; w < n; ++w) {
        std::uint8_t v = 0;
        if (wm.contains(d, h, w)) v = 3;
        else if (gm.contains(d, h, w)) v = 2;
        else if (csf.contains(d, h, w)) v = 1;
        else if (skull.contains(d, h, w)) v = 4;
        else if (scalp.contains(d, h, w)) v = 5;
        lab.at3(d, h, w) = v;
      }
  // intra-brain substructures: CSF pockets and GM/WM islands, brain-only
  const std::uint8_t sub_classes[3] = {1, 2, 3};
  for (int i = 0; i < p.n_ellipsoids; ++i) {
    Ellipsoid e;
    e.cd = c + rng.uniform(-0.35, 0.35) * gm.rd;
    e.ch = c + rng.uniform(-0.35, 0.35) * gm.rh;
    e.cw = c + rng.uniform(-0.35, 0.35) * gm.rw;
    e.rd = rng.uniform(0.08, 0.18) * n;
    e.rh = rng.uniform(0.08, 0.18) * n;
    e.rw = rng.uniform(0.08, 0.18) * n;
    const std::uint8_t cls = sub_classes[i % 3];
    for (index_t d = 0; d < n; ++d)
      for (index_t h = 0; h < n; ++h)
        for (index_t w = 0; w < n; ++w) {
          std::uint8_t& v = lab.at3(d, h, w);
          if ((v == 2 || v == 3) && e.contains(d, h, w)) v = cls;
        }
  }
  return lab;
}

// Smooth zero-centered field scaled to [-1, 1].
Tensor<real_t> modulation_field(index_t n, double sigma, Rng& rng) {
  Tensor<real_t> noise(Shape{n, n, n});
  for (index_t i = 0; i < noise.numel(); ++i) noise[i] = static_cast<real_t>(rng.normal());
  Tensor<real_t> f = vol::gaussian_blur(noise, sigma);
  double mean = 0;
  for (index_t i = 0; i < f.numel(); ++i) mean += f[i];
  mean /= static_cast<double>(f.numel());
  real_t amax = 0;
  for (index_t i = 0; i < f.numel(); ++i) {
    f[i] -= static_cast<real_t>(mean);
    amax = std::max(amax, std::abs(f[i]));
  }
  if (amax > 0)
    for (index_t i = 0; i < f.numel(); ++i) f[i] /= amax;
  return f;
}

}  // namespace

Tensor<std::uint8_t> make_void_region(index_t size, Rng& rng) {
  const double half = static_cast<double>(size) / 2.0;
  const double c = half - 0.5;
  Ellipsoid e;
  // straddles the inferior (low-d) head boundary: half tissue, half air
  e.cd = c - 0.88 * half;
  e.ch = c + rng.uniform(-0.15, 0.15) * half;
  e.cw = c + rng.uniform(-0.15, 0.15) * half;
  e.rd = rng.uniform(0.18, 0.25) * size;
  e.rh = rng.uniform(0.14, 0.2) * size;
  e.rw = rng.uniform(0.14, 0.2) * size;
  Tensor<std::uint8_t> region(Shape{size, size, size});
  for (index_t d = 0; d < size; ++d)
    for (index_t h = 0; h < size; ++h)
      for (index_t w = 0; w < size; ++w) region.at3(d, h, w) = e.contains(d, h, w) ? 1 : 0;
  return region;
}

vol::Volume degrade_to_ulf(const Volume& hf, const PhantomParams& p, std::uint64_t seed,
                           const Tensor<std::uint8_t>* void_region, double void_factor) {
  if (hf.norm_state != NormState::unit_normalized)
    throw std::invalid_argument("degrade_to_ulf: input must be unit-normalized");
  Rng rng(derive_seed(seed, 0x01f));
  Tensor<real_t> x = hf.data;
  if (p.blur_sigma_ulf > 0) x = vol::gaussian_blur(x, p.blur_sigma_ulf);
  if (p.downsample_factor > 1) {
    const Shape s = x.shape();
    x = vol::downsample_box(x, p.downsample_factor);
    x = vol::resize_volume(x, s[0], s[1], s[2]);
  }
  for (index_t i = 0; i < x.numel(); ++i) {
    double v = static_cast<double>(x[i]) + rng.normal(0.0, p.noise_sigma_ulf);
    x[i] = static_cast<real_t>(std::clamp(v, 0.0, 1.0));
  }
  if (void_region) {
    if (void_region->shape() != x.shape())
      throw std::invalid_argument("degrade_to_ulf: void region shape mismatch");
    for (index_t i = 0; i < x.numel(); ++i)
      if ((*void_region)[i]) x[i] = static_cast<real_t>(x[i] * void_factor);
  }
  Volume out;
  out.data = std::move(x);
  out.spacing = hf.spacing;
  out.norm_state = NormState::unit_normalized;
  return out;
}

vol::Volume degrade_to_ulf(const Volume& hf, const PhantomParams& p, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x101d));
  if (rng.bernoulli(p.void_probability)) {
    if (hf.data.dim(0) != hf.data.dim(1) || hf.data.dim(1) != hf.data.dim(2))
      throw std::invalid_argument("degrade_to_ulf: void insertion expects a cubic volume");
    Tensor<std::uint8_t> region = make_void_region(hf.data.dim(0), rng);
    const double factor = rng.uniform(0.0, 0.1);
    return degrade_to_ulf(hf, p, seed, &region, factor);
  }
  return degrade_to_ulf(hf, p, seed, nullptr, 0.0);
}

vol::Subject generate_phantom(const PhantomParams& p, std::uint64_t seed) {
  validate_params(p);
  Subject s;
  s.id = "phantom";  // caller assigns the persistent id
  Rng geo_rng(derive_seed(seed, 1));
  Tensor<std::uint8_t> lab = make_labelmap(p, geo_rng);

  // one subject-level draw for the acquisition void, shared across contrasts
  Rng void_rng(derive_seed(seed, 2));
  const bool has_void = void_rng.bernoulli(p.void_probability);
  Tensor<std::uint8_t> region;
  double factor = 0.0;
  if (has_void) {
    region = make_void_region(p.size, void_rng);
    factor = void_rng.uniform(0.0, 0.1);
  }

  const double mod_sigma = p.modulation_sigma_frac * static_cast<double>(p.size);
  int contrast_idx = 0;
  for (const auto& c : vol::contrasts()) {
    Rng mod_rng(derive_seed(seed, 3, static_cast<std::uint64_t>(contrast_idx)));
    Tensor<real_t> field = modulation_field(p.size, mod_sigma, mod_rng);
    Volume hf;
    hf.data = Tensor<real_t>(lab.shape());
    hf.norm_state = NormState::unit_normalized;
    const auto& means = p.class_means;
    for (index_t i = 0; i < lab.numel(); ++i) {
      const double base = means.at(static_cast<int>(lab[i])).at(c);
      const double v = base * (1.0 + p.modulation_amp * static_cast<double>(field[i]));
      hf.data[i] = static_cast<real_t>(std::clamp(v, 0.0, 1.0));
    }
    Volume ulf = degrade_to_ulf(hf, p, derive_seed(seed, 4, static_cast<std::uint64_t>(contrast_idx)),
                                has_void ? &region : nullptr, factor);
    s.hf.emplace(c, std::move(hf));
    s.ulf.emplace(c, std::move(ulf));
    ++contrast_idx;
  }

  Tensor<std::uint8_t> head(lab.shape());
  for (index_t i = 0; i < lab.numel(); ++i) head[i] = lab[i] != 0 ? 1 : 0;
  s.labelmap = std::move(lab);
  s.bg_mask = std::move(head);
  if (has_void) s.void_mask = std::move(region);
  vol::validate_subject(s);
  return s;
}

}  // namespace phantom
}  // namespace ulfe
