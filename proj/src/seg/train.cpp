#include "ulfe/seg/train.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

#include "ulfe/nn/checkpoint.hpp"
#include "ulfe/nn/optim.hpp"
#include "ulfe/seg/loss.hpp"

namespace ulfe::seg {

namespace {

std::shared_ptr<std::vector<index_t>> flat_labels(const Tensor<std::uint8_t>& lm) {
  auto out = std::make_shared<std::vector<index_t>>();
  out->reserve(static_cast<std::size_t>(lm.numel()));
  for (index_t i = 0; i < lm.numel(); ++i) out->push_back(static_cast<index_t>(lm[i]));
  return out;
}

nlohmann::json curve_to_json(const std::vector<SegEpochStats>& curve) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : curve)
    j.push_back({{"epoch", e.epoch},
                 {"train_loss", e.train_loss},
                 {"val_dice", e.val_dice},
                 {"augmented", e.augmented}});
  return j;
}

std::vector<SegEpochStats> curve_from_json(const nlohmann::json& j) {
  std::vector<SegEpochStats> curve;
  for (const auto& e : j)
    curve.push_back({e.at("epoch").get<index_t>(), e.at("train_loss").get<double>(),
                     e.at("val_dice").get<double>(), e.at("augmented").get<bool>()});
  return curve;
}

void write_curves_csv(const std::string& dir, const std::vector<SegEpochStats>& curve) {
  std::ofstream f(dir + "/curves.csv", std::ios::trunc);
  if (!f) throw std::runtime_error("train_segmentation: cannot write " + dir + "/curves.csv");
  f << "epoch,augmented,train_loss,val_dice\n" << std::setprecision(10);
  for (const auto& e : curve)
    f << e.epoch << "," << (e.augmented ? 1 : 0) << "," << e.train_loss << "," << e.val_dice << "\n";
}

// Deep copies of the parameter tensors, restorable by position.
std::vector<Tensor<real_t>> snapshot(const nn::Module<real_t>& m) {
  std::vector<Tensor<real_t>> out;
  for (const auto& [name, p] : m.named_parameters()) out.push_back(p->value);
  return out;
}

void restore(nn::Module<real_t>& m, const std::vector<Tensor<real_t>>& snap) {
  auto params = m.named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].second->value = snap[i];
}

}  // namespace

Tensor<real_t> stack_contrasts(const std::map<std::string, vol::Volume>& vols) {
  const auto& names = vol::contrasts();
  Shape spatial;
  for (const auto& name : names) {
    auto it = vols.find(name);
    if (it == vols.end()) throw std::invalid_argument("stack_contrasts: missing contrast " + name);
    if (it->second.norm_state != vol::NormState::unit_normalized)
      throw std::invalid_argument("stack_contrasts: contrast " + name + " is not unit-normalized");
    if (spatial.empty()) spatial = it->second.data.shape();
    else if (it->second.data.shape() != spatial)
      throw std::invalid_argument("stack_contrasts: contrast shapes disagree");
  }
  Tensor<real_t> out(Shape{static_cast<index_t>(names.size()), spatial[0], spatial[1], spatial[2]});
  const index_t n = shape_numel(spatial);
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto& src = vols.at(names[c]).data;
    std::copy(src.data(), src.data() + n, out.data() + static_cast<index_t>(c) * n);
  }
  return out;
}

double validate_dice(const SwinSeg<real_t>& model, const std::vector<vol::Subject>& val_set,
                     const std::vector<index_t>& classes) {
  if (val_set.empty()) throw std::invalid_argument("validate_dice: empty validation set");
  double total = 0;
  for (const auto& s : val_set) {
    if (!s.labelmap) throw std::invalid_argument("validate_dice: subject " + s.id + " has no labelmap");
    auto lg = seg_forward(model, stack_contrasts(s.ulf));
    total += mean_dice(lg.argmax(), *s.labelmap, classes);
  }
  return total / static_cast<double>(val_set.size());
}

SegTrainResult train_segmentation(SwinSeg<real_t>& model, const std::vector<vol::Subject>& train_set,
                                  const std::vector<vol::Subject>& val_set, const SegTrainConfig& cfg) {
  const index_t total_epochs = cfg.epochs_phase1 + cfg.epochs_phase2;
  if (total_epochs <= 0) throw std::invalid_argument("train_segmentation: empty schedule");
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train_segmentation: empty dataset");
  for (const auto& s : train_set)
    if (!s.labelmap)
      throw std::invalid_argument("train_segmentation: subject " + s.id + " has no labelmap");

  model.set_requires_grad(true);
  nn::Adam<real_t> opt(model.named_parameters(), cfg.lr);

  SegTrainResult result;
  std::vector<Tensor<real_t>> best_weights;
  index_t start_epoch = 0;
  const bool use_dir = !cfg.checkpoint_dir.empty();
  const std::string last_path = cfg.checkpoint_dir + "/last.ulfar";
  const std::string best_path = cfg.checkpoint_dir + "/best.ulfar";
  if (use_dir) std::filesystem::create_directories(cfg.checkpoint_dir);

  if (cfg.resume && use_dir && std::filesystem::exists(last_path)) {
    auto meta = nn::load_checkpoint(last_path, model, &opt);
    start_epoch = meta.at("epoch").get<index_t>();
    result.curve = curve_from_json(meta.at("curve"));
    result.best_epoch = meta.at("best_epoch").get<index_t>();
    result.best_val_dice = meta.at("best_val_dice").get<double>();
  }

  const index_t stop_epoch = cfg.max_epochs_per_run < 0
                                 ? total_epochs
                                 : std::min(total_epochs, start_epoch + cfg.max_epochs_per_run);
  for (index_t epoch = start_epoch; epoch < stop_epoch; ++epoch) {
    const bool augmented = epoch < cfg.epochs_phase1 && cfg.augmentation.enabled;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x73656773, static_cast<std::uint64_t>(epoch)));  // "segs"
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const auto& base = train_set[order[step]];
      vol::Subject aug;
      const vol::Subject* sub = &base;
      if (augmented) {
        aug = augment(base, cfg.augmentation,
                      derive_seed(cfg.seed, 0x73656761, static_cast<std::uint64_t>(epoch), step));
        sub = &aug;
      }
      auto x = nn::constant(stack_contrasts(sub->ulf));
      auto loss = dice_ce_loss(model(x), flat_labels(*sub->labelmap));
      loss_sum += static_cast<double>(loss->value[0]);
      model.zero_grad();
      nn::backward(loss);
      opt.step();
    }
    model.zero_grad();

    SegEpochStats stats;
    stats.epoch = epoch;
    stats.augmented = augmented;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.val_dice = validate_dice(model, val_set, cfg.dice_classes);
    result.curve.push_back(stats);

    if (result.best_epoch < 0 || stats.val_dice > result.best_val_dice) {
      result.best_epoch = epoch;
      result.best_val_dice = stats.val_dice;
      best_weights = snapshot(model);
      if (use_dir)
        nn::save_checkpoint<real_t>(best_path, model, nullptr,
                                    {{"epoch", epoch}, {"val_dice", stats.val_dice}});
    }
    if (use_dir) {
      nn::save_checkpoint(last_path, model, &opt,
                          {{"epoch", epoch + 1},
                           {"curve", curve_to_json(result.curve)},
                           {"best_epoch", result.best_epoch},
                           {"best_val_dice", result.best_val_dice}});
      write_curves_csv(cfg.checkpoint_dir, result.curve);
    }
  }

  if (!best_weights.empty()) restore(model, best_weights);
  else if (use_dir && std::filesystem::exists(best_path)) nn::load_checkpoint(best_path, model);
  model.zero_grad();
  model.set_requires_grad(false);
  return result;
}

}  // namespace ulfe::seg
