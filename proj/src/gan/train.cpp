#include "ulfe/gan/train.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ulfe/nn/checkpoint.hpp"
#include "ulfe/nn/optim.hpp"
#include "ulfe/seg/train.hpp"
#include "ulfe/slab/slab.hpp"

namespace ulfe::gan {

namespace {

nlohmann::json curve_to_json(const std::vector<CycleGanEpochStats>& curve) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : curve)
    j.push_back({{"epoch", e.epoch},
                 {"d_hf", e.d_hf},
                 {"d_ulf", e.d_ulf},
                 {"g_adv_u2h", e.g_adv_u2h},
                 {"g_adv_h2u", e.g_adv_h2u},
                 {"cycle_ulf", e.cycle_ulf},
                 {"cycle_hf", e.cycle_hf},
                 {"paired", e.paired},
                 {"lambda_paired", e.lambda_paired},
                 {"g_total", e.g_total},
                 {"val_weighted", e.val_weighted}});
  return j;
}

std::vector<CycleGanEpochStats> curve_from_json(const nlohmann::json& j) {
  std::vector<CycleGanEpochStats> curve;
  for (const auto& e : j)
    curve.push_back({e.at("epoch").get<index_t>(), e.at("d_hf").get<double>(),
                     e.at("d_ulf").get<double>(), e.at("g_adv_u2h").get<double>(),
                     e.at("g_adv_h2u").get<double>(), e.at("cycle_ulf").get<double>(),
                     e.at("cycle_hf").get<double>(), e.at("paired").get<double>(),
                     e.at("lambda_paired").get<double>(), e.at("g_total").get<double>(),
                     e.at("val_weighted").get<double>()});
  return curve;
}

std::vector<Tensor<real_t>> snapshot(const nn::Module<real_t>& m) {
  std::vector<Tensor<real_t>> out;
  for (const auto& [name, p] : m.named_parameters()) out.push_back(p->value);
  return out;
}

void restore(nn::Module<real_t>& m, const std::vector<Tensor<real_t>>& snap) {
  auto params = m.named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].second->value = snap[i];
}

std::vector<std::pair<std::string, nn::Var<real_t>>> prefixed(const std::string& tag,
                                                              const nn::Module<real_t>& m) {
  std::vector<std::pair<std::string, nn::Var<real_t>>> out;
  for (const auto& [name, p] : m.named_parameters()) out.emplace_back(tag + "/" + name, p);
  return out;
}

void require_paired(const std::vector<vol::Subject>& set) {
  for (const auto& s : set)
    for (const auto& name : vol::contrasts())
      if (s.hf.find(name) == s.hf.end())
        throw std::invalid_argument("train_cyclegan: subject " + s.id +
                                    " missing paired HF volumes");
}

// Slab outputs stitched over the plan; `fn` sees the slab and its start index.
Tensor<real_t> run_slabs(const Tensor<real_t>& stack,
                         const std::function<Tensor<real_t>(const Tensor<real_t>&, index_t)>& fn,
                         const InferOptions& opts) {
  const index_t D = stack.dim(1);
  const auto plan = slab::enumerate_slabs(D, std::min(opts.slab_depth, D), opts.stride);
  std::vector<std::pair<index_t, Tensor<real_t>>> outs;
  outs.reserve(plan.starts.size());
  for (index_t start : plan.starts) {
    Tensor<real_t> y = fn(slab::extract_slab(stack, start, plan.slab_depth), start);
    if (y.rank() != 4 || y.dim(0) != 3)
      throw std::invalid_argument("enhance_contrasts: slab function must return (3,d,H,W)");
    outs.emplace_back(start, std::move(y));
  }
  return slab::stitch(outs, plan, Shape{3, D, stack.dim(2), stack.dim(3)});
}

std::map<std::string, vol::Volume> split_contrasts(const Tensor<real_t>& stitched,
                                                   const vol::Subject& s) {
  std::map<std::string, vol::Volume> out;
  const index_t n = stitched.dim(1) * stitched.dim(2) * stitched.dim(3);
  const auto& names = vol::contrasts();
  for (std::size_t c = 0; c < names.size(); ++c) {
    vol::Volume v;
    v.data = Tensor<real_t>(Shape{stitched.dim(1), stitched.dim(2), stitched.dim(3)});
    std::copy(stitched.data() + static_cast<index_t>(c) * n,
              stitched.data() + static_cast<index_t>(c + 1) * n, v.data.data());
    v.spacing = s.ulf.at(names[c]).spacing;
    v.norm_state = vol::NormState::unit_normalized;
    out.emplace(names[c], std::move(v));
  }
  return out;
}

}  // namespace

std::string cyclegan_curve_csv(const std::vector<CycleGanEpochStats>& curve) {
  std::ostringstream f;
  f << "epoch,d_hf,d_ulf,g_adv_u2h,g_adv_h2u,cycle_ulf,cycle_hf,paired,lambda_paired,"
       "g_total,val_weighted\n"
    << std::setprecision(17);
  for (const auto& e : curve)
    f << e.epoch << "," << e.d_hf << "," << e.d_ulf << "," << e.g_adv_u2h << "," << e.g_adv_h2u
      << "," << e.cycle_ulf << "," << e.cycle_hf << "," << e.paired << "," << e.lambda_paired
      << "," << e.g_total << "," << e.val_weighted << "\n";
  return f.str();
}

std::map<std::string, vol::Volume> enhance_contrasts(
    const std::function<Tensor<real_t>(const Tensor<real_t>&)>& slab_fn, const vol::Subject& s,
    const InferOptions& opts) {
  if (s.ulf.empty()) throw std::invalid_argument("enhance_contrasts: subject has no ULF volumes");
  const Tensor<real_t> stack = seg::stack_contrasts(s.ulf);
  return split_contrasts(
      run_slabs(stack, [&](const Tensor<real_t>& slab, index_t) { return slab_fn(slab); }, opts),
      s);
}

vol::Subject infer_cyclegan(const Generator<real_t>& g_u2h, const seg::SwinSeg<real_t>& seg_model,
                            const vol::Subject& s, const InferOptions& opts) {
  if (g_u2h.config().direction != Direction::ulf_to_hf)
    throw std::invalid_argument("infer_cyclegan: generator must map ULF to HF");
  nn::NoGradGuard ng;
  const Tensor<real_t> stack = seg::stack_contrasts(s.ulf);
  Tensor<real_t> stitched;
  if (opts.full_volume_conditioning) {
    const Tensor<real_t> probs = seg::seg_forward(seg_model, stack).probs();
    stitched = run_slabs(
        stack,
        [&](const Tensor<real_t>& slab, index_t start) {
          auto cond = slab::extract_slab(probs, start, slab.dim(1));
          return g_u2h(nn::constant(slab), nn::constant(std::move(cond)))->value;
        },
        opts);
  } else {
    stitched = run_slabs(
        stack,
        [&](const Tensor<real_t>& slab, index_t) {
          auto cond = seg::seg_forward(seg_model, slab).probs();
          return g_u2h(nn::constant(slab), nn::constant(std::move(cond)))->value;
        },
        opts);
  }
  vol::Subject out;
  out.id = s.id;
  out.ulf = s.ulf;
  out.hf = split_contrasts(stitched, s);
  out.labelmap = s.labelmap;
  out.bg_mask = s.bg_mask;
  out.void_mask = s.void_mask;
  return out;
}

double validate_weighted(const Generator<real_t>& g_u2h, const seg::SwinSeg<real_t>& seg_model,
                         const std::vector<vol::Subject>& val_set, const InferOptions& opts,
                         const metrics::SsimParams& params) {
  if (val_set.empty()) throw std::invalid_argument("validate_weighted: empty validation set");
  double total = 0;
  for (const auto& s : val_set) {
    if (s.hf.empty())
      throw std::invalid_argument("validate_weighted: subject " + s.id + " has no HF reference");
    const vol::Subject enhanced = infer_cyclegan(g_u2h, seg_model, s, opts);
    const Tensor<std::uint8_t>* mask = s.bg_mask ? &*s.bg_mask : nullptr;
    const auto report = metrics::evaluate_subject(enhanced.hf, s.hf, mask,
                                                  metrics::ScoreAggregation::mean_then_score,
                                                  params);
    total += mask ? report.weighted_masked : report.weighted_unmasked;
  }
  return total / static_cast<double>(val_set.size());
}

CycleGanResult train_cyclegan(Generator<real_t>& g_u2h, Generator<real_t>& g_h2u,
                              PatchDiscriminator<real_t>& d_hf, PatchDiscriminator<real_t>& d_ulf,
                              const seg::SwinSeg<real_t>& seg_model,
                              const std::vector<vol::Subject>& train_set,
                              const std::vector<vol::Subject>& val_set,
                              const CycleGanTrainConfig& cfg) {
  if (cfg.epochs <= 0) throw std::invalid_argument("train_cyclegan: empty schedule");
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train_cyclegan: empty dataset");
  if (g_u2h.config().direction != Direction::ulf_to_hf ||
      g_h2u.config().direction != Direction::hf_to_ulf)
    throw std::invalid_argument("train_cyclegan: generator directions mismatched");
  validate(cfg.weights);
  require_paired(train_set);
  require_paired(val_set);
  const std::string seg_hash = nn::weights_hash(seg_model);

  g_u2h.set_requires_grad(true);
  g_h2u.set_requires_grad(true);
  d_hf.set_requires_grad(true);
  d_ulf.set_requires_grad(true);

  auto g_params = prefixed("g_u2h", g_u2h);
  auto h_params = prefixed("g_h2u", g_h2u);
  g_params.insert(g_params.end(), h_params.begin(), h_params.end());
  nn::Adam<real_t> opt_g(std::move(g_params), cfg.lr, cfg.adam_beta1);
  auto d_params = prefixed("d_hf", d_hf);
  auto du_params = prefixed("d_ulf", d_ulf);
  d_params.insert(d_params.end(), du_params.begin(), du_params.end());
  nn::Adam<real_t> opt_d(std::move(d_params), cfg.lr, cfg.adam_beta1);

  const std::vector<std::pair<std::string, const nn::Module<real_t>*>> cmodels = {
      {"g_u2h", &g_u2h}, {"g_h2u", &g_h2u}, {"d_hf", &d_hf}, {"d_ulf", &d_ulf}};
  const std::vector<std::pair<std::string, nn::Module<real_t>*>> mmodels = {
      {"g_u2h", &g_u2h}, {"g_h2u", &g_h2u}, {"d_hf", &d_hf}, {"d_ulf", &d_ulf}};
  const std::vector<std::pair<std::string, nn::Adam<real_t>*>> opt_pair = {{"g", &opt_g},
                                                                           {"d", &opt_d}};

  CycleGanResult result;
  std::vector<std::vector<Tensor<real_t>>> best_weights;
  index_t start_epoch = 0;
  const bool use_dir = !cfg.checkpoint_dir.empty();
  const std::string last_path = cfg.checkpoint_dir + "/last.ulfar";
  const std::string best_path = cfg.checkpoint_dir + "/best.ulfar";
  if (use_dir) std::filesystem::create_directories(cfg.checkpoint_dir);

  if (cfg.resume && use_dir && std::filesystem::exists(last_path)) {
    auto meta = nn::load_bundle(last_path, mmodels, opt_pair);
    start_epoch = meta.at("epoch").get<index_t>();
    result.curve = curve_from_json(meta.at("curve"));
    result.best_epoch = meta.at("best_epoch").get<index_t>();
    result.best_val_weighted = meta.at("best_val_weighted").get<double>();
  }

  const index_t stop_epoch = cfg.max_epochs_per_run < 0
                                 ? cfg.epochs
                                 : std::min(cfg.epochs, start_epoch + cfg.max_epochs_per_run);
  for (index_t epoch = start_epoch; epoch < stop_epoch; ++epoch) {
    const double lambda_paired = penalty_schedule(static_cast<double>(epoch), cfg.weights);

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x67616e73, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    CycleGanEpochStats stats;
    stats.epoch = epoch;
    stats.lambda_paired = lambda_paired;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const auto& subject = train_set[order[step]];
      const index_t depth = subject.ulf.begin()->second.data.dim(0);
      const auto slab = slab::sample_training_slab(
          subject, std::min(cfg.slab_depth, depth),
          derive_seed(cfg.seed, 0x67736c62, static_cast<std::uint64_t>(epoch), step));
      const Tensor<real_t> ulf_t = seg::stack_contrasts(slab.ulf);
      const Tensor<real_t> hf_t = seg::stack_contrasts(slab.hf);
      auto ulf_v = nn::constant(ulf_t);
      auto hf_v = nn::constant(hf_t);
      auto cond = nn::constant(seg::seg_forward(seg_model, ulf_t).probs());

      // Generator update against the current critics.
      auto fake_hf = g_u2h(ulf_v, cond);
      auto fake_ulf = g_h2u(hf_v);
      auto rec_ulf = g_h2u(fake_hf);
      auto cond_fake = nn::constant(seg::seg_forward(seg_model, fake_ulf->value).probs());
      auto rec_hf = g_u2h(fake_ulf, cond_fake);
      auto real_scores_hf = d_hf(hf_v);
      auto real_scores_ulf = d_ulf(ulf_v);
      auto adv_u2h = adversarial_losses(nn::detach(real_scores_hf), d_hf(fake_hf)).first;
      auto adv_h2u = adversarial_losses(nn::detach(real_scores_ulf), d_ulf(fake_ulf)).first;
      auto cyc_u = cycle_loss(rec_ulf, ulf_v);
      auto cyc_h = cycle_loss(rec_hf, hf_v);
      auto g_total = nn::add(nn::mul_s(nn::add(adv_u2h, adv_h2u),
                                       static_cast<real_t>(cfg.weights.lambda_adv)),
                             nn::add(nn::mul_s(cyc_u, static_cast<real_t>(cfg.weights.lambda_cycle_ulf)),
                                     nn::mul_s(cyc_h, static_cast<real_t>(cfg.weights.lambda_cycle_hf))));
      double paired_value;
      if (lambda_paired > 0) {
        auto paired = paired_challenge_loss(fake_hf, hf_v, cfg.psnr_cap_db, cfg.ssim);
        paired_value = static_cast<double>(paired->value[0]);
        g_total = nn::add(g_total, nn::mul_s(paired, static_cast<real_t>(lambda_paired)));
      } else {
        nn::NoGradGuard ng;
        paired_value = static_cast<double>(
            paired_challenge_loss(nn::constant(fake_hf->value), nn::constant(hf_t),
                                  cfg.psnr_cap_db, cfg.ssim)
                ->value[0]);
      }
      opt_g.zero_grad();
      nn::backward(g_total);
      opt_g.step();

      // Critic update on detached fakes from the pre-update generators.
      auto d_loss_hf = adversarial_losses(real_scores_hf, d_hf(nn::detach(fake_hf))).second;
      auto d_loss_ulf = adversarial_losses(real_scores_ulf, d_ulf(nn::detach(fake_ulf))).second;
      auto d_total = nn::add(d_loss_hf, d_loss_ulf);
      opt_d.zero_grad();
      nn::backward(d_total);
      opt_d.step();

      stats.d_hf += static_cast<double>(d_loss_hf->value[0]);
      stats.d_ulf += static_cast<double>(d_loss_ulf->value[0]);
      stats.g_adv_u2h += static_cast<double>(adv_u2h->value[0]);
      stats.g_adv_h2u += static_cast<double>(adv_h2u->value[0]);
      stats.cycle_ulf += static_cast<double>(cyc_u->value[0]);
      stats.cycle_hf += static_cast<double>(cyc_h->value[0]);
      stats.paired += paired_value;
      stats.g_total += static_cast<double>(g_total->value[0]);
    }
    const double n = static_cast<double>(train_set.size());
    stats.d_hf /= n;
    stats.d_ulf /= n;
    stats.g_adv_u2h /= n;
    stats.g_adv_h2u /= n;
    stats.cycle_ulf /= n;
    stats.cycle_hf /= n;
    stats.paired /= n;
    stats.g_total /= n;
    g_u2h.zero_grad();
    g_h2u.zero_grad();
    d_hf.zero_grad();
    d_ulf.zero_grad();

    stats.val_weighted = validate_weighted(g_u2h, seg_model, val_set, cfg.val_infer, cfg.ssim);
    result.curve.push_back(stats);

    if (result.best_epoch < 0 || stats.val_weighted > result.best_val_weighted) {
      result.best_epoch = epoch;
      result.best_val_weighted = stats.val_weighted;
      best_weights.clear();
      for (const auto& [tag, m] : cmodels) best_weights.push_back(snapshot(*m));
      if (use_dir)
        nn::save_bundle(best_path, cmodels, {},
                        {{"epoch", epoch}, {"val_weighted", stats.val_weighted}});
    }
    if (use_dir) {
      nn::save_bundle(last_path, cmodels, opt_pair,
                      {{"epoch", epoch + 1},
                       {"curve", curve_to_json(result.curve)},
                       {"best_epoch", result.best_epoch},
                       {"best_val_weighted", result.best_val_weighted}});
      std::ofstream f(cfg.checkpoint_dir + "/curves.csv", std::ios::trunc);
      if (!f)
        throw std::runtime_error("train_cyclegan: cannot write " + cfg.checkpoint_dir +
                                 "/curves.csv");
      f << cyclegan_curve_csv(result.curve);
    }
  }

  if (!best_weights.empty()) {
    for (std::size_t i = 0; i < mmodels.size(); ++i) restore(*mmodels[i].second, best_weights[i]);
  } else if (use_dir && std::filesystem::exists(best_path)) {
    nn::load_bundle(best_path, mmodels);
  }
  for (const auto& [tag, m] : mmodels) {
    m->zero_grad();
    m->set_requires_grad(false);
  }
  if (nn::weights_hash(seg_model) != seg_hash)
    throw std::runtime_error("train_cyclegan: segmentation weights changed during training");
  return result;
}

}  // namespace ulfe::gan
