#pragma once

#include "ulfe/core/tensor.hpp"

namespace ulfe {
namespace vol {

/// Separable Gaussian blur with symmetric-reflection boundary handling.
/// Kernel radius ceil(3 sigma); sigma <= 0 is the identity.
Tensor<real_t> gaussian_blur(const Tensor<real_t>& v, double sigma);

/// Mean over non-overlapping factor^3 blocks; extents must divide by factor.
Tensor<real_t> downsample_box(const Tensor<real_t>& v, index_t factor);

/// Trilinear resize to the given extents with half-pixel centers.
Tensor<real_t> resize_volume(const Tensor<real_t>& v, index_t od, index_t oh, index_t ow);

}  // namespace vol
}  // namespace ulfe
