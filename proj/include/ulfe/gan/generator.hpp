#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulfe/core/rng.hpp"
#include "ulfe/nn/conv.hpp"
#include "ulfe/nn/init.hpp"
#include "ulfe/nn/module.hpp"
#include "ulfe/nn/ops.hpp"
#include "ulfe/vol/volume.hpp"

namespace ulfe::gan {

// How segmentation probabilities enter the enhancement generator: stacked onto the
// input as six extra channels, or injected into every normalization layer.
enum class Conditioning { concat, spade };

enum class Direction { ulf_to_hf, hf_to_ulf };

struct GeneratorConfig {
  Direction direction = Direction::ulf_to_hf;
  Conditioning conditioning = Conditioning::concat;  // ignored for hf_to_ulf
  index_t base_channels = 8;
  index_t n_res_blocks = 9;
  index_t bottleneck_channels = 0;  // 0: derived (4x base; reduced under spade at full scale)
  index_t spade_hidden = 16;        // hidden width of the modulation network
  bool paper_scale = false;
};

// Full-scale settings. The spade variant narrows the bottleneck so both conditioning
// modes land at matched parameter budgets despite the extra modulation networks.
inline GeneratorConfig resolved_generator(const GeneratorConfig& config) {
  GeneratorConfig r = config;
  if (r.paper_scale) {
    r.base_channels = 64;
    r.n_res_blocks = 9;
    r.spade_hidden = 128;
    const bool spade =
        r.direction == Direction::ulf_to_hf && r.conditioning == Conditioning::spade;
    r.bottleneck_channels = spade ? 140 : 4 * r.base_channels;
  }
  if (r.bottleneck_channels == 0) r.bottleneck_channels = 4 * r.base_channels;
  if (r.base_channels < 1 || r.n_res_blocks < 1 || r.bottleneck_channels < 1 ||
      r.spade_hidden < 1)
    throw std::invalid_argument("generator: channel and block counts must be positive");
  return r;
}

inline index_t generator_input_channels(const GeneratorConfig& config) {
  if (config.direction == Direction::hf_to_ulf) return 3;
  return config.conditioning == Conditioning::concat ? 3 + vol::kNumClasses : 3;
}

// Spatially adaptive normalization: parameter-free per-channel standardization of the
// features, modulated voxelwise by gamma/beta maps predicted from the conditioning
// volume (resampled to the feature resolution). The modulation convolutions start at
// zero, so an untrained layer is exactly plain standardization.
template <typename S>
class SpadeNorm : public nn::Module<S> {
 public:
  SpadeNorm(index_t channels, index_t cond_channels, index_t hidden, Rng& rng) {
    ws_ = this->param("shared/w", nn::kaiming_normal<S>(Shape{hidden, cond_channels, 3, 3, 3},
                                                        cond_channels * 27, rng));
    bs_ = this->param("shared/b", nn::zeros<S>(Shape{hidden}));
    wg_ = this->param("gamma/w", nn::zeros<S>(Shape{channels, hidden, 3, 3, 3}));
    bg_ = this->param("gamma/b", nn::zeros<S>(Shape{channels}));
    wb_ = this->param("beta/w", nn::zeros<S>(Shape{channels, hidden, 3, 3, 3}));
    bb_ = this->param("beta/b", nn::zeros<S>(Shape{channels}));
  }

  nn::Var<S> operator()(const nn::Var<S>& x, const nn::Var<S>& cond) const {
    if (!cond) throw std::invalid_argument("spade_normalize: conditioning maps required");
    if (cond->value.rank() != 4 || cond->value.dim(0) != ws_->value.dim(1))
      throw std::invalid_argument("spade_normalize: conditioning must be (" +
                                  std::to_string(ws_->value.dim(1)) + ",D,H,W)");
    nn::Var<S> c = cond;
    if (cond->value.dim(1) != x->value.dim(1) || cond->value.dim(2) != x->value.dim(2) ||
        cond->value.dim(3) != x->value.dim(3))
      c = nn::resize_trilinear(cond, x->value.dim(1), x->value.dim(2), x->value.dim(3));
    auto h = nn::relu(nn::conv3d(c, ws_, bs_, 1, 1));
    auto gamma = nn::conv3d(h, wg_, bg_, 1, 1);
    auto beta = nn::conv3d(h, wb_, bb_, 1, 1);
    auto normed = nn::channel_standardize(x, S(1e-5));
    return nn::add(nn::mul(normed, nn::add_s(gamma, S(1))), beta);
  }

 private:
  nn::Var<S> ws_, bs_, wg_, bg_, wb_, bb_;
};

// One normalization site of the generator: learnable instance normalization, or a
// SpadeNorm when the generator injects conditioning through its normalization layers.
template <typename S>
class NormSite : public nn::Module<S> {
 public:
  NormSite(index_t channels, bool spade, index_t cond_channels, index_t hidden, Rng& rng) {
    if (spade) {
      spade_ = std::make_unique<SpadeNorm<S>>(channels, cond_channels, hidden, rng);
      this->child("spade", *spade_);
    } else {
      g_ = this->param("g", nn::ones<S>(Shape{channels}));
      b_ = this->param("b", nn::zeros<S>(Shape{channels}));
    }
  }

  nn::Var<S> operator()(const nn::Var<S>& x, const nn::Var<S>& cond) const {
    if (spade_) return (*spade_)(x, cond);
    return nn::channel_affine(nn::channel_standardize(x, S(1e-5)), g_, b_);
  }

 private:
  std::unique_ptr<SpadeNorm<S>> spade_;
  nn::Var<S> g_, b_;
};

// Residual block at the bottleneck width: two reflect-padded 3x3x3 convolutions with
// normalization, identity skip, no activation after the addition.
template <typename S>
class GanResBlock : public nn::Module<S> {
 public:
  GanResBlock(index_t channels, bool spade, index_t cond_channels, index_t hidden, Rng& rng)
      : norm1_(channels, spade, cond_channels, hidden, rng),
        norm2_(channels, spade, cond_channels, hidden, rng) {
    w1_ = this->param("w1", nn::trunc_normal<S>(Shape{channels, channels, 3, 3, 3}, rng));
    b1_ = this->param("b1", nn::zeros<S>(Shape{channels}));
    w2_ = this->param("w2", nn::trunc_normal<S>(Shape{channels, channels, 3, 3, 3}, rng));
    b2_ = this->param("b2", nn::zeros<S>(Shape{channels}));
    this->child("norm1", norm1_);
    this->child("norm2", norm2_);
  }

  nn::Var<S> operator()(const nn::Var<S>& x, const nn::Var<S>& cond) const {
    auto h = nn::relu(norm1_(nn::conv3d(x, w1_, b1_, 1, 1, nn::Pad::reflect), cond));
    h = norm2_(nn::conv3d(h, w2_, b2_, 1, 1, nn::Pad::reflect), cond);
    return nn::add(x, h);
  }

 private:
  nn::Var<S> w1_, b1_, w2_, b2_;
  NormSite<S> norm1_, norm2_;
};

// Residual volume-to-volume generator: reflect-padded 7x7x7 stem, two stride-2
// downsampling convolutions, a residual bottleneck, and two trilinear-upsample +
// convolution stages back to input resolution (no transposed convolutions anywhere),
// closed by a 7x7x7 projection and a sigmoid onto the unit intensity range.
//
// Enhancement direction takes three contrasts plus six-class conditioning, entering
// either as a nine-channel stack or through spatially adaptive normalization; the
// reverse direction is unconditioned and three-channel.
template <typename S>
class Generator : public nn::Module<S> {
 public:
  explicit Generator(const GeneratorConfig& config, std::uint64_t seed = 0)
      : cfg_(resolved_generator(config)) {
    Rng rng(derive_seed(seed, 0x47454e52));  // "GENR"
    in_ch_ = generator_input_channels(cfg_);
    spade_ = cfg_.direction == Direction::ulf_to_hf && cfg_.conditioning == Conditioning::spade;
    const index_t C = cfg_.base_channels;
    const index_t B = cfg_.bottleneck_channels;
    const index_t K = vol::kNumClasses;
    const index_t H = cfg_.spade_hidden;

    stem_w_ = this->param("stem/w", nn::trunc_normal<S>(Shape{C, in_ch_, 7, 7, 7}, rng));
    stem_b_ = this->param("stem/b", nn::zeros<S>(Shape{C}));
    stem_n_ = std::make_unique<NormSite<S>>(C, spade_, K, H, rng);
    this->child("stem/norm", *stem_n_);

    d1_w_ = this->param("down1/w", nn::trunc_normal<S>(Shape{2 * C, C, 3, 3, 3}, rng));
    d1_b_ = this->param("down1/b", nn::zeros<S>(Shape{2 * C}));
    d1_n_ = std::make_unique<NormSite<S>>(2 * C, spade_, K, H, rng);
    this->child("down1/norm", *d1_n_);

    d2_w_ = this->param("down2/w", nn::trunc_normal<S>(Shape{B, 2 * C, 3, 3, 3}, rng));
    d2_b_ = this->param("down2/b", nn::zeros<S>(Shape{B}));
    d2_n_ = std::make_unique<NormSite<S>>(B, spade_, K, H, rng);
    this->child("down2/norm", *d2_n_);

    for (index_t i = 0; i < cfg_.n_res_blocks; ++i) {
      blocks_.push_back(std::make_unique<GanResBlock<S>>(B, spade_, K, H, rng));
      this->child("res" + std::to_string(i), *blocks_.back());
    }

    u1_w_ = this->param("up1/w", nn::trunc_normal<S>(Shape{2 * C, B, 3, 3, 3}, rng));
    u1_b_ = this->param("up1/b", nn::zeros<S>(Shape{2 * C}));
    u1_n_ = std::make_unique<NormSite<S>>(2 * C, spade_, K, H, rng);
    this->child("up1/norm", *u1_n_);

    u2_w_ = this->param("up2/w", nn::trunc_normal<S>(Shape{C, 2 * C, 3, 3, 3}, rng));
    u2_b_ = this->param("up2/b", nn::zeros<S>(Shape{C}));
    u2_n_ = std::make_unique<NormSite<S>>(C, spade_, K, H, rng);
    this->child("up2/norm", *u2_n_);

    final_w_ = this->param("final/w", nn::trunc_normal<S>(Shape{3, C, 7, 7, 7}, rng));
    final_b_ = this->param("final/b", nn::zeros<S>(Shape{3}));
  }

  const GeneratorConfig& config() const { return cfg_; }
  index_t input_channels() const { return in_ch_; }

  nn::Var<S> operator()(const nn::Var<S>& x, const nn::Var<S>& cond = {}) const {
    if (!x || x->value.rank() != 4 || x->value.dim(0) != 3)
      throw std::invalid_argument("generator: expected 3 input contrasts (3,D,H,W)");
    const index_t D = x->value.dim(1), Hx = x->value.dim(2), W = x->value.dim(3);
    if (D < 5 || Hx < 5 || W < 5)
      throw std::invalid_argument("generator: spatial extents must be at least 5");
    if (cfg_.direction == Direction::ulf_to_hf) {
      if (!cond) throw std::invalid_argument("generator: conditioning maps required");
      if (cond->value.rank() != 4 || cond->value.dim(0) != vol::kNumClasses)
        throw std::invalid_argument("generator: conditioning must be (" +
                                    std::to_string(vol::kNumClasses) + ",D,H,W)");
      if (cond->value.dim(1) != D || cond->value.dim(2) != Hx || cond->value.dim(3) != W)
        throw std::invalid_argument("generator: conditioning shape mismatch");
    } else if (cond) {
      throw std::invalid_argument("generator: unexpected conditioning");
    }

    nn::Var<S> h = x;
    if (cfg_.direction == Direction::ulf_to_hf && cfg_.conditioning == Conditioning::concat)
      h = nn::concat(0, {x, cond});
    h = nn::relu((*stem_n_)(nn::conv3d(h, stem_w_, stem_b_, 1, 3, nn::Pad::reflect), cond));
    h = nn::relu((*d1_n_)(nn::conv3d(h, d1_w_, d1_b_, 2, 1), cond));
    const index_t d1 = h->value.dim(1), h1 = h->value.dim(2), w1 = h->value.dim(3);
    h = nn::relu((*d2_n_)(nn::conv3d(h, d2_w_, d2_b_, 2, 1), cond));
    for (const auto& block : blocks_) h = (*block)(h, cond);
    h = nn::resize_trilinear(h, d1, h1, w1);
    h = nn::relu((*u1_n_)(nn::conv3d(h, u1_w_, u1_b_, 1, 1, nn::Pad::reflect), cond));
    h = nn::resize_trilinear(h, D, Hx, W);
    h = nn::relu((*u2_n_)(nn::conv3d(h, u2_w_, u2_b_, 1, 1, nn::Pad::reflect), cond));
    return nn::sigmoid(nn::conv3d(h, final_w_, final_b_, 1, 3, nn::Pad::reflect));
  }

 private:
  GeneratorConfig cfg_;
  index_t in_ch_ = 3;
  bool spade_ = false;
  nn::Var<S> stem_w_, stem_b_, d1_w_, d1_b_, d2_w_, d2_b_;
  nn::Var<S> u1_w_, u1_b_, u2_w_, u2_b_, final_w_, final_b_;
  std::unique_ptr<NormSite<S>> stem_n_, d1_n_, d2_n_, u1_n_, u2_n_;
  std::vector<std::unique_ptr<GanResBlock<S>>> blocks_;
};

}  // namespace ulfe::gan
