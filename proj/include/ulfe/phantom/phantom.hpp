#pragma once

#include <map>

#include "ulfe/core/rng.hpp"
#include "ulfe/vol/volume.hpp"

namespace ulfe {
namespace phantom {

/// Synthetic-subject recipe. Intensities are per-class means in [0,1];
/// degradation emulates low-field acquisition (blur, resolution loss, noise).
struct PhantomParams {
  index_t size = 32;                 // cubic grid extent
  int n_ellipsoids = 4;              // intra-brain substructures
  std::map<int, std::map<std::string, double>> class_means;  // class -> contrast -> mean
  double noise_sigma_ulf = 0.05;
  double blur_sigma_ulf = 1.2;
  index_t downsample_factor = 2;
  double void_probability = 0.0;
  double modulation_amp = 0.05;      // multiplicative bias-field amplitude
  double modulation_sigma_frac = 0.25;  // bias-field smoothness, fraction of size
};

/// T1/T2 rank tissue classes in opposite orders (CSF dark on T1, bright on T2).
std::map<int, std::map<std::string, double>> default_class_means();

PhantomParams default_phantom_params();

void validate_params(const PhantomParams& p);

/// Full synthetic subject: nested-ellipsoid labelmap, per-contrast HF volumes,
/// degraded ULF volumes, head mask, and the inserted void region if any.
vol::Subject generate_phantom(const PhantomParams& p, std::uint64_t seed);

/// blur -> downsample -> upsample -> noise -> clip; then an optional inferior
/// signal void region multiplied by void_factor.
vol::Volume degrade_to_ulf(const vol::Volume& hf, const PhantomParams& p, std::uint64_t seed,
                           const Tensor<std::uint8_t>* void_region, double void_factor);

/// Standalone variant: draws the void decision, region, and factor from seed.
vol::Volume degrade_to_ulf(const vol::Volume& hf, const PhantomParams& p, std::uint64_t seed);

/// Contiguous ellipsoidal region straddling the inferior head boundary.
Tensor<std::uint8_t> make_void_region(index_t size, Rng& rng);

}  // namespace phantom
}  // namespace ulfe
