#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ulfe/gan/train.hpp"
#include "ulfe/nn/checkpoint.hpp"
#include "ulfe/seg/train.hpp"

using namespace ulfe;

namespace {

// Concentric-shell subject with paired contrasts: HF volumes are the clean
// label-derived intensities, ULF volumes a noisy rendition of the same anatomy.
vol::Subject make_subject(const std::string& id, std::uint64_t seed, index_t D = 24) {
  Rng rng(seed);
  vol::Subject s;
  s.id = id;
  Tensor<std::uint8_t> lm(Shape{D, D, D});
  Tensor<std::uint8_t> mask(Shape{D, D, D});
  const double c = static_cast<double>(D - 1) / 2.0;
  for (index_t d = 0; d < D; ++d)
    for (index_t h = 0; h < D; ++h)
      for (index_t w = 0; w < D; ++w) {
        const double r = std::sqrt((d - c) * (d - c) + (h - c) * (h - c) + (w - c) * (w - c));
        const index_t i = (d * D + h) * D + w;
        lm[i] = r < 0.20 * D ? 3 : r < 0.31 * D ? 2 : r < 0.42 * D ? 1 : 0;
        mask[i] = lm[i] > 0 ? 1 : 0;
      }
  s.labelmap = lm;
  s.bg_mask = mask;

  const auto& names = vol::contrasts();
  for (std::size_t ci = 0; ci < names.size(); ++ci) {
    vol::Volume u, hf;
    u.data = Tensor<real_t>(Shape{D, D, D});
    hf.data = Tensor<real_t>(Shape{D, D, D});
    for (index_t i = 0; i < lm.numel(); ++i) {
      const double base = ci % 2 == 0 ? static_cast<double>(lm[i]) / 5.0
                                      : static_cast<double>(5 - lm[i]) / 6.0;
      hf.data[i] = static_cast<real_t>(base);
      u.data[i] = static_cast<real_t>(
          std::clamp(base + rng.normal(0.0, 0.05), 0.0, 1.0));
    }
    u.norm_state = vol::NormState::unit_normalized;
    hf.norm_state = vol::NormState::unit_normalized;
    s.ulf.emplace(names[ci], std::move(u));
    s.hf.emplace(names[ci], std::move(hf));
  }
  return s;
}

gan::GeneratorConfig gen_config(gan::Direction dir) {
  gan::GeneratorConfig cfg;
  cfg.direction = dir;
  cfg.base_channels = 2;
  cfg.n_res_blocks = 1;
  cfg.spade_hidden = 4;
  return cfg;
}

gan::DiscriminatorConfig disc_config() {
  gan::DiscriminatorConfig cfg;
  cfg.base_channels = 2;
  return cfg;
}

seg::SegModelConfig seg_config() {
  seg::SegModelConfig cfg;
  cfg.feature_size = 4;
  cfg.depths = {1, 1};
  cfg.heads = {1, 1};
  cfg.window = 2;
  return cfg;
}

gan::CycleGanTrainConfig fast_config(const std::string& dir) {
  gan::CycleGanTrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  cfg.slab_depth = 40;  // larger than the 24-voxel volumes; clamps to full depth
  cfg.weights.lambda_paired_max = 0.5;
  cfg.weights.tau = 2.0;
  cfg.ssim.support = 5;
  cfg.ssim.sigma = 1.0;
  cfg.checkpoint_dir = dir;
  return cfg;
}

}  // namespace

TEST_CASE("cyclegan training rejects malformed setups") {
  std::vector<vol::Subject> train = {make_subject("a", 1)};
  std::vector<vol::Subject> val = {make_subject("b", 2)};
  seg::SwinSeg<real_t> seg_model(seg_config(), 3);
  gan::Generator<real_t> g_u2h(gen_config(gan::Direction::ulf_to_hf), 4);
  gan::Generator<real_t> g_h2u(gen_config(gan::Direction::hf_to_ulf), 5);
  gan::PatchDiscriminator<real_t> d_hf(disc_config(), 6), d_ulf(disc_config(), 7);

  gan::CycleGanTrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_WITH_AS(
      (void)gan::train_cyclegan(g_u2h, g_h2u, d_hf, d_ulf, seg_model, train, val, cfg),
      "train_cyclegan: empty schedule", std::invalid_argument);
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(
      (void)gan::train_cyclegan(g_u2h, g_h2u, d_hf, d_ulf, seg_model, {}, val, cfg),
      "train_cyclegan: empty dataset", std::invalid_argument);

  auto unpaired = train;
  unpaired[0].hf.clear();
  CHECK_THROWS_WITH_AS(
      (void)gan::train_cyclegan(g_u2h, g_h2u, d_hf, d_ulf, seg_model, unpaired, val, cfg),
      "train_cyclegan: subject a missing paired HF volumes", std::invalid_argument);

  gan::Generator<real_t> wrong_dir(gen_config(gan::Direction::ulf_to_hf), 8);
  CHECK_THROWS_WITH_AS(
      (void)gan::train_cyclegan(g_u2h, wrong_dir, d_hf, d_ulf, seg_model, train, val, cfg),
      "train_cyclegan: generator directions mismatched", std::invalid_argument);

  cfg.weights.lambda_cycle_ulf = -1;
  CHECK_THROWS_AS(
      (void)gan::train_cyclegan(g_u2h, g_h2u, d_hf, d_ulf, seg_model, train, val, cfg),
      std::invalid_argument);
}

TEST_CASE("a short adversarial run logs the schedule and restores the best weights") {
  std::vector<vol::Subject> train = {make_subject("a", 1), make_subject("b", 2)};
  std::vector<vol::Subject> val = {make_subject("d", 4)};
  seg::SwinSeg<real_t> seg_model(seg_config(), 3);
  seg_model.set_requires_grad(false);
  const std::string seg_hash = nn::weights_hash(seg_model);

  gan::Generator<real_t> g_u2h(gen_config(gan::Direction::ulf_to_hf), 4);
  gan::Generator<real_t> g_h2u(gen_config(gan::Direction::hf_to_ulf), 5);
  gan::PatchDiscriminator<real_t> d_hf(disc_config(), 6), d_ulf(disc_config(), 7);

  const std::string dir = std::filesystem::temp_directory_path() / "ulfe_gan_run";
  std::filesystem::remove_all(dir);
  auto cfg = fast_config(dir);
  auto result = gan::train_cyclegan(g_u2h, g_h2u, d_hf, d_ulf, seg_model, train, val, cfg);

  REQUIRE(result.curve.size() == 3);
  double best = -1e30;
  index_t best_epoch = -1;
  for (index_t e = 0; e < 3; ++e) {
    const auto& row = result.curve[static_cast<std::size_t>(e)];
    CHECK(row.epoch == e);
    // the logged paired weight must follow the ramp exactly
    CHECK(row.lambda_paired ==
          gan::penalty_schedule(static_cast<double>(e), cfg.weights));
    for (double v : {row.d_hf, row.d_ulf, row.g_adv_u2h, row.g_adv_h2u, row.cycle_ulf,
                     row.cycle_hf, row.paired, row.g_total, row.val_weighted})
      CHECK(std::isfinite(v));
    if (row.val_weighted > best) {
      best = row.val_weighted;
      best_epoch = e;
    }
  }
  CHECK(result.best_epoch == best_epoch);
  CHECK(result.best_val_weighted == doctest::Approx(best));

  // training must not have touched the frozen segmentation weights
  CHECK(nn::weights_hash(seg_model) == seg_hash);

  // returned networks are inference-ready and hold the checkpointed best weights
  for (const auto& [name, p] : g_u2h.named_parameters()) CHECK(!p->requires_grad);
  for (const auto& [name, p] : d_hf.named_parameters()) CHECK(!p->requires_grad);
  gan::Generator<real_t> g_best(gen_config(gan::Direction::ulf_to_hf), 99);
  gan::Generator<real_t> h_best(gen_config(gan::Direction::hf_to_ulf), 99);
  gan::PatchDiscriminator<real_t> dh_best(disc_config(), 99), du_best(disc_config(), 99);
  nn::load_bundle<real_t>(dir + "/best.ulfar",
                          {{"g_u2h", &g_best}, {"g_h2u", &h_best}, {"d_hf", &dh_best},
                           {"d_ulf", &du_best}});
  CHECK(nn::weights_hash(g_best) == nn::weights_hash(g_u2h));
  CHECK(nn::weights_hash(h_best) == nn::weights_hash(g_h2u));

  std::ifstream csv(dir + "/curves.csv");
  REQUIRE(csv.good());
  std::string header;
  std::getline(csv, header);
  CHECK(header ==
        "epoch,d_hf,d_ulf,g_adv_u2h,g_adv_h2u,cycle_ulf,cycle_hf,paired,lambda_paired,"
        "g_total,val_weighted");
  int rows = 0;
  for (std::string line; std::getline(csv, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("interrupted cyclegan training resumes bitwise identically") {
  std::vector<vol::Subject> train = {make_subject("a", 1)};
  std::vector<vol::Subject> val = {make_subject("c", 3)};
  seg::SwinSeg<real_t> seg_model(seg_config(), 3);
  seg_model.set_requires_grad(false);

  const std::string dir_a = std::filesystem::temp_directory_path() / "ulfe_gan_a";
  const std::string dir_b = std::filesystem::temp_directory_path() / "ulfe_gan_b";
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);

  gan::Generator<real_t> ga(gen_config(gan::Direction::ulf_to_hf), 4);
  gan::Generator<real_t> ha(gen_config(gan::Direction::hf_to_ulf), 5);
  gan::PatchDiscriminator<real_t> dha(disc_config(), 6), dua(disc_config(), 7);
  auto cfg_a = fast_config(dir_a);
  cfg_a.epochs = 2;
  auto res_a = gan::train_cyclegan(ga, ha, dha, dua, seg_model, train, val, cfg_a);

  gan::Generator<real_t> gb(gen_config(gan::Direction::ulf_to_hf), 4);
  gan::Generator<real_t> hb(gen_config(gan::Direction::hf_to_ulf), 5);
  gan::PatchDiscriminator<real_t> dhb(disc_config(), 6), dub(disc_config(), 7);
  auto cfg_b = fast_config(dir_b);
  cfg_b.epochs = 2;
  cfg_b.max_epochs_per_run = 1;
  (void)gan::train_cyclegan(gb, hb, dhb, dub, seg_model, train, val, cfg_b);

  gan::Generator<real_t> gb2(gen_config(gan::Direction::ulf_to_hf), 44);
  gan::Generator<real_t> hb2(gen_config(gan::Direction::hf_to_ulf), 45);
  gan::PatchDiscriminator<real_t> dhb2(disc_config(), 46), dub2(disc_config(), 47);
  cfg_b.resume = true;
  cfg_b.max_epochs_per_run = -1;
  auto res_b = gan::train_cyclegan(gb2, hb2, dhb2, dub2, seg_model, train, val, cfg_b);

  REQUIRE(res_b.curve.size() == res_a.curve.size());
  for (std::size_t e = 0; e < res_a.curve.size(); ++e) {
    CHECK(res_b.curve[e].g_total == doctest::Approx(res_a.curve[e].g_total).epsilon(1e-12));
    CHECK(res_b.curve[e].val_weighted ==
          doctest::Approx(res_a.curve[e].val_weighted).epsilon(1e-12));
    CHECK(res_b.curve[e].lambda_paired == res_a.curve[e].lambda_paired);
  }
  CHECK(res_b.best_epoch == res_a.best_epoch);
  CHECK(nn::weights_hash(gb2) == nn::weights_hash(ga));
  CHECK(nn::weights_hash(hb2) == nn::weights_hash(ha));
  CHECK(nn::weights_hash(dhb2) == nn::weights_hash(dha));
  CHECK(nn::weights_hash(dub2) == nn::weights_hash(dua));
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("slab-wise inference stitches identity stubs exactly") {
  auto s = make_subject("a", 9, 30);
  gan::InferOptions opts;
  opts.slab_depth = 12;
  opts.stride = 5;  // overlapping slabs: starts 0,5,10,15 plus the tail at 18

  auto identity = [](const Tensor<real_t>& slab) { return slab; };
  auto out = gan::enhance_contrasts(identity, s, opts);
  REQUIRE(out.size() == 3);
  for (const auto& name : vol::contrasts()) {
    CHECK(out.at(name).data.vec() == s.ulf.at(name).data.vec());
    CHECK(out.at(name).norm_state == vol::NormState::unit_normalized);
  }

  auto bad = [](const Tensor<real_t>& slab) {
    return Tensor<real_t>(Shape{2, slab.dim(1), slab.dim(2), slab.dim(3)});
  };
  CHECK_THROWS_WITH_AS((void)gan::enhance_contrasts(bad, s, opts),
                       "enhance_contrasts: slab function must return (3,d,H,W)",
                       std::invalid_argument);
}

TEST_CASE("generator inference is deterministic and conditioning modes agree on one slab") {
  auto s = make_subject("a", 10, 24);
  seg::SwinSeg<real_t> seg_model(seg_config(), 3);
  gan::Generator<real_t> g(gen_config(gan::Direction::ulf_to_hf), 11);
  gan::Generator<real_t> h2u(gen_config(gan::Direction::hf_to_ulf), 12);

  gan::InferOptions opts;  // slab_depth 40 clamps to the full 24-voxel depth
  auto e1 = gan::infer_cyclegan(g, seg_model, s, opts);
  auto e2 = gan::infer_cyclegan(g, seg_model, s, opts);
  REQUIRE(e1.hf.size() == 3);
  for (const auto& name : vol::contrasts()) {
    const auto& v = e1.hf.at(name);
    CHECK(v.data.shape() == s.ulf.at(name).data.shape());
    for (index_t i = 0; i < v.data.numel(); ++i) {
      CHECK(v.data[i] >= 0);
      CHECK(v.data[i] <= 1);
    }
    CHECK(v.data.vec() == e2.hf.at(name).data.vec());
    CHECK(e1.ulf.at(name).data.vec() == s.ulf.at(name).data.vec());
  }

  // one slab covering the whole volume: per-slab and full-volume conditioning coincide
  gan::InferOptions full = opts;
  full.full_volume_conditioning = true;
  auto e3 = gan::infer_cyclegan(g, seg_model, s, full);
  for (const auto& name : vol::contrasts())
    CHECK(e3.hf.at(name).data.vec() == e1.hf.at(name).data.vec());

  CHECK_THROWS_WITH_AS((void)gan::infer_cyclegan(h2u, seg_model, s, opts),
                       "infer_cyclegan: generator must map ULF to HF", std::invalid_argument);
}
