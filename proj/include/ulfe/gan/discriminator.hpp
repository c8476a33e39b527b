#pragma once

#include <stdexcept>
#include <string>

#include "ulfe/core/rng.hpp"
#include "ulfe/nn/conv.hpp"
#include "ulfe/nn/init.hpp"
#include "ulfe/nn/module.hpp"
#include "ulfe/nn/ops.hpp"

namespace ulfe::gan {

struct DiscriminatorConfig {
  index_t in_channels = 3;
  index_t base_channels = 8;
  bool paper_scale = false;  // widens base_channels to 64
};

inline DiscriminatorConfig resolved_discriminator(const DiscriminatorConfig& config) {
  DiscriminatorConfig r = config;
  if (r.paper_scale) r.base_channels = 64;
  if (r.in_channels < 1 || r.base_channels < 1)
    throw std::invalid_argument("discriminator: channel counts must be positive");
  return r;
}

// Volumetric patch critic: three stride-2 4x4x4 convolutions, one stride-1 widening
// layer, and a single-channel projection. The output is a spatial map of overlapping
// patch scores; callers average it for a scalar decision. Instance normalization on
// every layer but the first, leaky ReLU activations.
template <typename S>
class PatchDiscriminator : public nn::Module<S> {
 public:
  explicit PatchDiscriminator(const DiscriminatorConfig& config, std::uint64_t seed = 0)
      : cfg_(resolved_discriminator(config)) {
    Rng rng(derive_seed(seed, 0x44495343));  // "DISC"
    const index_t C = cfg_.base_channels;
    const index_t widths[5] = {cfg_.in_channels, C, 2 * C, 4 * C, 8 * C};
    for (int i = 0; i < 4; ++i) {
      const std::string tag = "layer" + std::to_string(i);
      w_[i] = this->param(tag + "/w",
                          nn::trunc_normal<S>(Shape{widths[i + 1], widths[i], 4, 4, 4}, rng));
      b_[i] = this->param(tag + "/b", nn::zeros<S>(Shape{widths[i + 1]}));
      if (i > 0) {
        g_[i] = this->param(tag + "/g", nn::ones<S>(Shape{widths[i + 1]}));
        a_[i] = this->param(tag + "/a", nn::zeros<S>(Shape{widths[i + 1]}));
      }
    }
    out_w_ = this->param("out/w", nn::trunc_normal<S>(Shape{1, 8 * C, 4, 4, 4}, rng));
    out_b_ = this->param("out/b", nn::zeros<S>(Shape{1}));
  }

  const DiscriminatorConfig& config() const { return cfg_; }

  // x (C,D,H,W) -> patch scores (1,d,h,w)
  nn::Var<S> operator()(const nn::Var<S>& x) const {
    if (!x || x->value.rank() != 4 || x->value.dim(0) != cfg_.in_channels)
      throw std::invalid_argument("discriminator: expected (" +
                                  std::to_string(cfg_.in_channels) + ",D,H,W) input");
    if (x->value.dim(1) < 24 || x->value.dim(2) < 24 || x->value.dim(3) < 24)
      throw std::invalid_argument("discriminator: spatial extents must be at least 24");
    nn::Var<S> h = nn::leaky_relu(nn::conv3d(x, w_[0], b_[0], 2, 1), S(0.2));
    for (int i = 1; i < 4; ++i) {
      h = nn::conv3d(h, w_[i], b_[i], i < 3 ? 2 : 1, 1);
      h = nn::leaky_relu(nn::channel_affine(nn::channel_standardize(h, S(1e-5)), g_[i], a_[i]),
                         S(0.2));
    }
    return nn::conv3d(h, out_w_, out_b_, 1, 1);
  }

 private:
  DiscriminatorConfig cfg_;
  nn::Var<S> w_[4], b_[4], g_[4], a_[4];
  nn::Var<S> out_w_, out_b_;
};

}  // namespace ulfe::gan
