#pragma once

#include <memory>
#include <vector>

#include "ulfe/nn/attention.hpp"
#include "ulfe/nn/conv.hpp"
#include "ulfe/nn/dense.hpp"
#include "ulfe/nn/init.hpp"
#include "ulfe/nn/module.hpp"
#include "ulfe/nn/ops.hpp"
#include "ulfe/nn/spatial.hpp"
#include "ulfe/seg/windows.hpp"

// Hierarchical shifted-window attention encoder with a convolutional skip decoder,
// mapping a 3-contrast stack to 6-class tissue logits at the input resolution.

namespace ulfe::seg {

struct SegModelConfig {
  index_t in_channels = 3, n_classes = 6;
  index_t feature_size = 8;
  std::vector<index_t> depths{1, 1};  // attention blocks per stage; one merge after each stage
  std::vector<index_t> heads{2, 2};
  index_t window = 4;
  double mlp_ratio = 4.0;
  bool paper_scale = false;  // swaps in the full-size configuration below
};

inline SegModelConfig resolved(SegModelConfig c) {
  if (c.paper_scale) {
    c.feature_size = 48;
    c.depths = {2, 2, 2, 2};
    c.heads = {3, 6, 12, 24};
    c.window = 7;
    c.mlp_ratio = 4.0;
  }
  if (c.depths.empty() || c.depths.size() != c.heads.size())
    throw std::invalid_argument("SegModelConfig: depths and heads must be non-empty and equal length");
  return c;
}

template <typename S>
using Linear = nn::Linear<S>;
template <typename S>
using TokenNorm = nn::TokenNorm<S>;

template <typename S>
class WindowAttention : public nn::Module<S> {
 public:
  WindowAttention(index_t dim, index_t heads, index_t window, Rng& rng)
      : heads_(heads), qkv_(dim, 3 * dim, rng), proj_(dim, dim, rng) {
    const index_t span = 2 * window - 1;
    table_ = this->param("rel_bias", nn::trunc_normal<S>(Shape{heads, span * span * span}, rng));
    this->child("qkv", qkv_);
    this->child("proj", proj_);
  }
  nn::Var<S> operator()(const nn::Var<S>& x, const WindowGeometry<S>& g) const {
    const index_t C = x->value.dim(1);
    auto qkv = nn::remap(qkv_(x), g.qkv_map, Shape{g.n_windows * g.tokens, 3 * C});
    auto bias = nn::reshape(nn::remap(table_, g.bias_map, Shape{heads_ * g.tokens * g.tokens}),
                            Shape{heads_, g.tokens, g.tokens});
    auto att = nn::windowed_mhsa(qkv, bias, g.mask, g.n_windows, g.tokens, heads_);
    return proj_(nn::remap(att, g.out_map, Shape{x->value.dim(0), C}));
  }

 private:
  index_t heads_;
  Linear<S> qkv_, proj_;
  nn::Var<S> table_;
};

template <typename S>
class SwinBlock : public nn::Module<S> {
 public:
  SwinBlock(index_t dim, index_t heads, index_t window, double mlp_ratio, bool shifted, Rng& rng)
      : dim_(dim),
        heads_(heads),
        window_(window),
        shifted_(shifted),
        norm1_(dim),
        attn_(dim, heads, window, rng),
        norm2_(dim),
        fc1_(dim, static_cast<index_t>(mlp_ratio * static_cast<double>(dim)), rng),
        fc2_(static_cast<index_t>(mlp_ratio * static_cast<double>(dim)), dim, rng) {
    this->child("norm1", norm1_);
    this->child("attn", attn_);
    this->child("norm2", norm2_);
    this->child("fc1", fc1_);
    this->child("fc2", fc2_);
  }
  nn::Var<S> operator()(nn::Var<S> x, index_t D, index_t H, index_t W) const {
    auto g = build_window_geometry<S>(D, H, W, dim_, heads_, window_, shifted_);
    x = nn::add(x, attn_(norm1_(x), g));
    return nn::add(x, fc2_(nn::gelu(fc1_(norm2_(x)))));
  }

 private:
  index_t dim_, heads_, window_;
  bool shifted_;
  TokenNorm<S> norm1_;
  WindowAttention<S> attn_;
  TokenNorm<S> norm2_;
  Linear<S> fc1_, fc2_;
};

// 2x downsampling by concatenating each 2x2x2 neighborhood (8C) and reducing to 2C.
template <typename S>
class PatchMerging : public nn::Module<S> {
 public:
  PatchMerging(index_t dim, Rng& rng) : norm_(8 * dim), red_(8 * dim, 2 * dim, rng, /*bias=*/false) {
    this->child("norm", norm_);
    this->child("red", red_);
  }
  nn::Var<S> operator()(const nn::Var<S>& x, index_t D, index_t H, index_t W) const {
    if (D % 2 || H % 2 || W % 2) throw std::invalid_argument("PatchMerging: extents must be even");
    const index_t C = x->value.dim(1);
    const index_t Nc = (D / 2) * (H / 2) * (W / 2);
    auto map = std::make_shared<std::vector<index_t>>();
    map->reserve(static_cast<std::size_t>(Nc * 8 * C));
    for (index_t d = 0; d < D / 2; ++d)
      for (index_t h = 0; h < H / 2; ++h)
        for (index_t w = 0; w < W / 2; ++w)
          for (index_t q = 0; q < 8; ++q) {
            const index_t t = ((2 * d + (q >> 2)) * H + 2 * h + ((q >> 1) & 1)) * W + 2 * w + (q & 1);
            for (index_t c = 0; c < C; ++c) map->push_back(t * C + c);
          }
    return red_(norm_(nn::remap(x, map, Shape{Nc, 8 * C})));
  }

 private:
  TokenNorm<S> norm_;
  Linear<S> red_;
};

// Two 3^3 convolutions with instance normalization and a (projected) residual.
template <typename S>
class ConvBlock : public nn::Module<S> {
 public:
  ConvBlock(index_t cin, index_t cout, Rng& rng) : project_(cin != cout) {
    w1_ = this->param("w1", nn::kaiming_normal<S>(Shape{cout, cin, 3, 3, 3}, cin * 27, rng));
    b1_ = this->param("b1", nn::zeros<S>(Shape{cout}));
    g1_ = this->param("g1", nn::ones<S>(Shape{cout}));
    a1_ = this->param("a1", nn::zeros<S>(Shape{cout}));
    w2_ = this->param("w2", nn::kaiming_normal<S>(Shape{cout, cout, 3, 3, 3}, cout * 27, rng));
    b2_ = this->param("b2", nn::zeros<S>(Shape{cout}));
    g2_ = this->param("g2", nn::ones<S>(Shape{cout}));
    a2_ = this->param("a2", nn::zeros<S>(Shape{cout}));
    if (project_) {
      ws_ = this->param("ws", nn::kaiming_normal<S>(Shape{cout, cin, 1, 1, 1}, cin, rng));
      bs_ = this->param("bs", nn::zeros<S>(Shape{cout}));
      gs_ = this->param("gs", nn::ones<S>(Shape{cout}));
      as_ = this->param("as", nn::zeros<S>(Shape{cout}));
    }
  }
  nn::Var<S> operator()(const nn::Var<S>& x) const {
    auto in = [](const nn::Var<S>& v, const nn::Var<S>& g, const nn::Var<S>& a) {
      return nn::channel_affine(nn::channel_standardize(v, S(1e-5)), g, a);
    };
    auto h = nn::leaky_relu(in(nn::conv3d(x, w1_, b1_, 1, 1), g1_, a1_), S(0.01));
    h = in(nn::conv3d(h, w2_, b2_, 1, 1), g2_, a2_);
    auto skip = project_ ? in(nn::conv3d(x, ws_, bs_, 1, 0), gs_, as_) : x;
    return nn::leaky_relu(nn::add(h, skip), S(0.01));
  }

 private:
  bool project_;
  nn::Var<S> w1_, b1_, g1_, a1_, w2_, b2_, g2_, a2_, ws_, bs_, gs_, as_;
};

// Trilinear 2x upsampling, 1^3 channel reduction, concat with the skip, conv block.
template <typename S>
class UpBlock : public nn::Module<S> {
 public:
  UpBlock(index_t cin, index_t cskip, index_t cout, Rng& rng) : block_(cout + cskip, cout, rng) {
    w_ = this->param("w", nn::kaiming_normal<S>(Shape{cout, cin, 1, 1, 1}, cin, rng));
    b_ = this->param("b", nn::zeros<S>(Shape{cout}));
    this->child("block", block_);
  }
  nn::Var<S> operator()(const nn::Var<S>& x, const nn::Var<S>& skip) const {
    auto up = nn::resize_trilinear(x, skip->value.dim(1), skip->value.dim(2), skip->value.dim(3));
    auto u = nn::conv3d(up, w_, b_, 1, 0);
    return block_(nn::concat(0, {u, skip}));
  }

 private:
  nn::Var<S> w_, b_;
  ConvBlock<S> block_;
};

template <typename S>
class SwinSeg : public nn::Module<S> {
 public:
  explicit SwinSeg(const SegModelConfig& config, std::uint64_t seed = 0) : cfg_(resolved(config)) {
    Rng rng(derive_seed(seed, 0x5345474e));  // "SEGN"
    const index_t F = cfg_.feature_size;
    const index_t L = static_cast<index_t>(cfg_.depths.size());
    embed_w_ = this->param("embed/w", nn::kaiming_normal<S>(Shape{F, cfg_.in_channels, 2, 2, 2},
                                                            cfg_.in_channels * 8, rng));
    embed_b_ = this->param("embed/b", nn::zeros<S>(Shape{F}));
    enc_in_ = std::make_unique<ConvBlock<S>>(cfg_.in_channels, F, rng);
    this->child("enc_in", *enc_in_);
    for (index_t i = 0; i < L; ++i) {
      const index_t C = F << i;
      blocks_.emplace_back();
      for (index_t b = 0; b < cfg_.depths[static_cast<std::size_t>(i)]; ++b) {
        blocks_.back().push_back(std::make_unique<SwinBlock<S>>(
            C, cfg_.heads[static_cast<std::size_t>(i)], cfg_.window, cfg_.mlp_ratio, b % 2 == 1, rng));
        this->child("stage" + std::to_string(i) + "/block" + std::to_string(b), *blocks_.back().back());
      }
      enc_.push_back(std::make_unique<ConvBlock<S>>(C, C, rng));
      this->child("enc" + std::to_string(i), *enc_.back());
      merges_.push_back(std::make_unique<PatchMerging<S>>(C, rng));
      this->child("merge" + std::to_string(i), *merges_.back());
    }
    const index_t Cb = F << L;
    bottleneck_ = std::make_unique<ConvBlock<S>>(Cb, Cb, rng);
    this->child("bottleneck", *bottleneck_);
    for (index_t i = L; i >= 1; --i) {
      const index_t C = F << (i - 1);
      ups_.push_back(std::make_unique<UpBlock<S>>(2 * C, C, C, rng));
      this->child("up" + std::to_string(i), *ups_.back());
    }
    up_in_ = std::make_unique<UpBlock<S>>(F, F, F, rng);
    this->child("up_in", *up_in_);
    head_w_ = this->param("head/w", nn::kaiming_normal<S>(Shape{cfg_.n_classes, F, 1, 1, 1}, F, rng));
    head_b_ = this->param("head/b", nn::zeros<S>(Shape{cfg_.n_classes}));
  }

  const SegModelConfig& config() const { return cfg_; }

  // total spatial downsampling: patch embed (2x) plus one merge per stage
  index_t divisor() const { return index_t{2} << cfg_.depths.size(); }

  nn::Var<S> operator()(const nn::Var<S>& x) const {
    if (x->value.rank() != 4 || x->value.dim(0) != cfg_.in_channels)
      throw std::invalid_argument("SwinSeg: channel-count mismatch, expects " +
                                  std::to_string(cfg_.in_channels) + " input channels");
    const index_t D = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const index_t M = divisor();
    auto up_to = [M](index_t n) { return (n + M - 1) / M * M; };
    auto xp = nn::pad_spatial_reflect(x, up_to(D), up_to(H), up_to(W));

    auto s_in = (*enc_in_)(xp);
    auto e = nn::conv3d(xp, embed_w_, embed_b_, 2, 0);
    index_t d = e->value.dim(1), h = e->value.dim(2), w = e->value.dim(3);
    auto tokens = nn::tokens_from_spatial(e);

    std::vector<nn::Var<S>> skips;
    const index_t L = static_cast<index_t>(cfg_.depths.size());
    for (index_t i = 0; i < L; ++i) {
      for (const auto& blk : blocks_[static_cast<std::size_t>(i)]) tokens = (*blk)(tokens, d, h, w);
      skips.push_back((*enc_[static_cast<std::size_t>(i)])(nn::spatial_from_tokens(tokens, d, h, w)));
      tokens = (*merges_[static_cast<std::size_t>(i)])(tokens, d, h, w);
      d /= 2;
      h /= 2;
      w /= 2;
    }
    auto dec = (*bottleneck_)(nn::spatial_from_tokens(tokens, d, h, w));
    for (index_t i = 0; i < L; ++i) dec = (*ups_[static_cast<std::size_t>(i)])(dec, skips[static_cast<std::size_t>(L - 1 - i)]);
    dec = (*up_in_)(dec, s_in);
    auto logits = nn::conv3d(dec, head_w_, head_b_, 1, 0);
    return nn::crop_spatial(logits, D, H, W);
  }

 private:
  SegModelConfig cfg_;
  nn::Var<S> embed_w_, embed_b_, head_w_, head_b_;
  std::unique_ptr<ConvBlock<S>> enc_in_, bottleneck_;
  std::vector<std::vector<std::unique_ptr<SwinBlock<S>>>> blocks_;
  std::vector<std::unique_ptr<ConvBlock<S>>> enc_;
  std::vector<std::unique_ptr<PatchMerging<S>>> merges_;
  std::vector<std::unique_ptr<UpBlock<S>>> ups_;
  std::unique_ptr<UpBlock<S>> up_in_;
};

// Frozen-model inference: class scores plus on-demand softmax probabilities.
struct SegLogits {
  Tensor<real_t> scores;  // (6, D, H, W)

  Tensor<real_t> probs() const {
    const index_t C = scores.dim(0), M = scores.numel() / C;
    Tensor<real_t> p(scores.shape());
    for (index_t m = 0; m < M; ++m) {
      double mx = scores[m];
      for (index_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(scores[c * M + m]));
      double z = 0;
      for (index_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(scores[c * M + m]) - mx);
      for (index_t c = 0; c < C; ++c)
        p[c * M + m] = static_cast<real_t>(std::exp(static_cast<double>(scores[c * M + m]) - mx) / z);
    }
    return p;
  }

  Tensor<std::uint8_t> argmax() const {
    const index_t C = scores.dim(0), M = scores.numel() / C;
    Tensor<std::uint8_t> out(Shape{scores.dim(1), scores.dim(2), scores.dim(3)});
    for (index_t m = 0; m < M; ++m) {
      index_t best = 0;
      for (index_t c = 1; c < C; ++c)
        if (scores[c * M + m] > scores[best * M + m]) best = c;
      out[m] = static_cast<std::uint8_t>(best);
    }
    return out;
  }
};

template <typename S>
SegLogits seg_forward(const SwinSeg<S>& model, const Tensor<real_t>& ulf_stack) {
  nn::NoGradGuard ng;
  Tensor<S> in(ulf_stack.shape());
  for (index_t i = 0; i < in.numel(); ++i) in[i] = static_cast<S>(ulf_stack[i]);
  auto out = model(nn::constant(std::move(in)));
  SegLogits lg;
  lg.scores = Tensor<real_t>(out->value.shape());
  for (index_t i = 0; i < lg.scores.numel(); ++i) lg.scores[i] = static_cast<real_t>(out->value[i]);
  return lg;
}

}  // namespace ulfe::seg
