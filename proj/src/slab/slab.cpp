#include "ulfe/slab/slab.hpp"

#include <string>

namespace ulfe::slab {

SlabPlan enumerate_slabs(index_t volume_depth, index_t slab_depth, index_t stride) {
  if (volume_depth < 1 || slab_depth < 1)
    throw std::invalid_argument("enumerate_slabs: depths must be positive");
  if (stride < 1) throw std::invalid_argument("enumerate_slabs: stride must be >= 1");
  if (slab_depth > volume_depth)
    throw std::invalid_argument("enumerate_slabs: slab_depth " + std::to_string(slab_depth) +
                                " exceeds volume_depth " + std::to_string(volume_depth));
  SlabPlan plan{volume_depth, slab_depth, stride, {}};
  const index_t last = volume_depth - slab_depth;
  for (index_t s = 0; s <= last; s += stride) plan.starts.push_back(s);
  if (plan.starts.back() != last) plan.starts.push_back(last);  // tail slab for off-grid depths
  for (std::size_t i = 1; i < plan.starts.size(); ++i)
    if (plan.starts[i] > plan.starts[i - 1] + slab_depth)
      throw std::invalid_argument("enumerate_slabs: stride " + std::to_string(stride) +
                                  " leaves coverage gaps for slab_depth " + std::to_string(slab_depth));
  return plan;
}

vol::Subject sample_training_slab(const vol::Subject& subject, index_t slab_depth, std::uint64_t seed) {
  if (subject.ulf.empty()) throw std::invalid_argument("sample_training_slab: subject has no volumes");
  const index_t depth = subject.ulf.begin()->second.data.dim(0);
  if (depth < slab_depth)
    throw std::invalid_argument("sample_training_slab: depth " + std::to_string(depth) + " < slab_depth " +
                                std::to_string(slab_depth));
  Rng rng(derive_seed(seed, 0x736c6162));  // "slab"
  const index_t start = static_cast<index_t>(rng.uniform_int(static_cast<std::uint64_t>(depth - slab_depth + 1)));

  auto crop_vol = [&](const vol::Volume& v) {
    vol::Volume c;
    c.data = crop_depth(v.data, start, slab_depth);
    c.spacing = v.spacing;
    c.norm_state = v.norm_state;
    return c;
  };
  vol::Subject out;
  out.id = subject.id;
  for (const auto& [name, v] : subject.ulf) out.ulf.emplace(name, crop_vol(v));
  for (const auto& [name, v] : subject.hf) out.hf.emplace(name, crop_vol(v));
  if (subject.labelmap) out.labelmap = crop_depth(*subject.labelmap, start, slab_depth);
  if (subject.bg_mask) out.bg_mask = crop_depth(*subject.bg_mask, start, slab_depth);
  if (subject.void_mask) out.void_mask = crop_depth(*subject.void_mask, start, slab_depth);
  return out;
}

Tensor<real_t> stitch(const std::vector<std::pair<index_t, Tensor<real_t>>>& slabs, const SlabPlan& plan,
                      const Shape& out_shape) {
  if (out_shape.size() != 4) throw std::invalid_argument("stitch: out_shape must be (C, D, H, W)");
  const index_t C = out_shape[0], D = out_shape[1], H = out_shape[2], W = out_shape[3];
  if (D != plan.volume_depth) throw std::invalid_argument("stitch: out_shape depth disagrees with plan");
  const index_t plane = H * W;

  std::vector<double> acc(static_cast<std::size_t>(C * D * plane), 0.0);
  std::vector<index_t> cover(static_cast<std::size_t>(D), 0);
  for (const auto& [start, t] : slabs) {
    if (t.rank() != 4 || t.dim(0) != C || t.dim(1) != plan.slab_depth || t.dim(2) != H || t.dim(3) != W)
      throw std::invalid_argument("stitch: slab shape mismatch");
    if (start < 0 || start + plan.slab_depth > D)
      throw std::invalid_argument("stitch: slab start out of range");
    for (index_t c = 0; c < C; ++c) {
      const real_t* src = t.data() + c * plan.slab_depth * plane;
      double* dst = acc.data() + (c * D + start) * plane;
      for (index_t i = 0; i < plan.slab_depth * plane; ++i) dst[i] += static_cast<double>(src[i]);
    }
    for (index_t d = 0; d < plan.slab_depth; ++d) ++cover[static_cast<std::size_t>(start + d)];
  }
  for (index_t d = 0; d < D; ++d)
    if (cover[static_cast<std::size_t>(d)] == 0)
      throw std::runtime_error("stitch: coverage gap at depth index " + std::to_string(d));

  Tensor<real_t> out(out_shape);
  for (index_t c = 0; c < C; ++c)
    for (index_t d = 0; d < D; ++d) {
      const double inv = 1.0 / static_cast<double>(cover[static_cast<std::size_t>(d)]);
      const double* src = acc.data() + (c * D + d) * plane;
      real_t* dst = out.data() + (c * D + d) * plane;
      for (index_t i = 0; i < plane; ++i) dst[i] = static_cast<real_t>(src[i] * inv);
    }
  return out;
}

Tensor<real_t> enhance_by_slabs(const Tensor<real_t>& input, const SlabPlan& plan,
                                const std::function<Tensor<real_t>(const Tensor<real_t>&)>& enhance) {
  if (input.rank() != 4) throw std::invalid_argument("enhance_by_slabs: input must be (C, D, H, W)");
  if (input.dim(1) != plan.volume_depth)
    throw std::invalid_argument("enhance_by_slabs: input depth disagrees with plan");
  std::vector<std::pair<index_t, Tensor<real_t>>> outs;
  outs.reserve(plan.starts.size());
  for (index_t s : plan.starts) {
    Tensor<real_t> y = enhance(extract_slab(input, s, plan.slab_depth));
    if (y.rank() != 4 || y.dim(1) != plan.slab_depth || y.dim(2) != input.dim(2) || y.dim(3) != input.dim(3))
      throw std::runtime_error("enhance_by_slabs: enhancer changed the spatial extent");
    outs.emplace_back(s, std::move(y));
  }
  const Shape out_shape{outs.front().second.dim(0), input.dim(1), input.dim(2), input.dim(3)};
  return stitch(outs, plan, out_shape);
}

}  // namespace ulfe::slab
