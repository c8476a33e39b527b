#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ulfe/core/rng.hpp"
#include "ulfe/vol/volume.hpp"

namespace ulfe::slab {

struct SlabPlan {
  index_t volume_depth = 0;
  index_t slab_depth = 40;
  index_t stride = 5;
  std::vector<index_t> starts;  // sorted; union of [s, s+slab_depth) covers [0, volume_depth)
};

// Start positions {0, stride, 2*stride, ...} clipped to the valid range, plus a tail
// start at volume_depth - slab_depth when the grid alone leaves trailing slices uncovered.
SlabPlan enumerate_slabs(index_t volume_depth, index_t slab_depth = 40, index_t stride = 5);

// Contiguous depth crop of a (D, H, W) tensor.
template <typename T>
Tensor<T> crop_depth(const Tensor<T>& t, index_t start, index_t depth) {
  if (t.rank() != 3) throw std::invalid_argument("crop_depth: expected a (D, H, W) tensor");
  if (start < 0 || depth < 1 || start + depth > t.dim(0))
    throw std::invalid_argument("crop_depth: crop window out of range");
  const index_t plane = t.dim(1) * t.dim(2);
  Tensor<T> out(Shape{depth, t.dim(1), t.dim(2)});
  std::copy(t.data() + start * plane, t.data() + (start + depth) * plane, out.data());
  return out;
}

// Per-channel contiguous depth crop of a (C, D, H, W) tensor.
template <typename T>
Tensor<T> extract_slab(const Tensor<T>& x, index_t start, index_t depth) {
  if (x.rank() != 4) throw std::invalid_argument("extract_slab: expected a (C, D, H, W) tensor");
  if (start < 0 || depth < 1 || start + depth > x.dim(1))
    throw std::invalid_argument("extract_slab: crop window out of range");
  const index_t plane = x.dim(2) * x.dim(3);
  Tensor<T> out(Shape{x.dim(0), depth, x.dim(2), x.dim(3)});
  for (index_t c = 0; c < x.dim(0); ++c)
    std::copy(x.data() + (c * x.dim(1) + start) * plane, x.data() + (c * x.dim(1) + start + depth) * plane,
              out.data() + c * depth * plane);
  return out;
}

// Uniform random depth crop applied identically to every volume and mask the
// subject carries; deterministic in seed.
vol::Subject sample_training_slab(const vol::Subject& subject, index_t slab_depth, std::uint64_t seed);

// Overlap-averaged recomposition: each output voxel is the arithmetic mean of every
// covering slab's value (accumulated in double, so a perfect identity round-trips
// bit-exactly). Slabs are (C, slab_depth, H, W); out_shape is (C, D, H, W).
Tensor<real_t> stitch(const std::vector<std::pair<index_t, Tensor<real_t>>>& slabs, const SlabPlan& plan,
                      const Shape& out_shape);

// Runs `enhance` on every slab of `input` (C_in, D, H, W) under the plan and stitches
// the results; the functor's output fixes the stitched channel count.
Tensor<real_t> enhance_by_slabs(const Tensor<real_t>& input, const SlabPlan& plan,
                                const std::function<Tensor<real_t>(const Tensor<real_t>&)>& enhance);

}  // namespace ulfe::slab
