#pragma once

#include <vector>

#include "ulfe/core/rng.hpp"
#include "ulfe/vol/volume.hpp"

// Random spatial and intensity perturbations for segmentation training.
// Images and label maps go through the same geometric transform; labels use
// nearest-neighbor lookup so class ids never blend.

namespace ulfe::seg {

struct AugmentationPolicy {
  bool enabled = true;
  double rot_max_rad = 0.15;                 // per-axis rotation, uniform in [-max, max]
  double scale_min = 0.95, scale_max = 1.05; // isotropic
  double translate_max_frac = 0.03;          // of each spatial extent
  std::vector<int> flip_axes = {2};          // axes eligible for a fair-coin flip (0=D,1=H,2=W)
  double intensity_shift_max = 0.05;         // inputs only; targets stay clean
  double intensity_scale_max = 0.05;
};

// Source lookup for output voxel p: flip p on the integer grid, then apply the
// inverse linear map about the volume center and subtract the shift. A pure
// flip therefore lands exactly on grid points.
struct SpatialTransform {
  double a_inv[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  double shift[3] = {0, 0, 0};                     // voxels, input space
  bool flip[3] = {false, false, false};
};

SpatialTransform draw_transform(const AugmentationPolicy& policy, const Shape& spatial, Rng& rng);

// Trilinear (or nearest) resampling of one (D,H,W) channel, zero outside.
Tensor<real_t> resample(const Tensor<real_t>& chan, const SpatialTransform& t, bool nearest = false);
Tensor<std::uint8_t> resample_labels(const Tensor<std::uint8_t>& labels, const SpatialTransform& t);

// Applies one random draw to every volume of the subject: inputs get the
// spatial transform plus per-contrast intensity jitter (clamped back to unit
// range), targets get the spatial transform only, masks resample as labels.
vol::Subject augment(const vol::Subject& s, const AugmentationPolicy& policy, std::uint64_t seed);

}  // namespace ulfe::seg
