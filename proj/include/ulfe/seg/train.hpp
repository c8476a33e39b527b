#pragma once

#include <string>
#include <vector>

#include "ulfe/seg/augment.hpp"
#include "ulfe/seg/model.hpp"

// Two-phase segmentation training: an augmented phase followed by a clean
// phase, with the best validation-Dice checkpoint restored and frozen at the
// end. Per-epoch seeds are derived statelessly from the base seed, so a run
// resumed from the last checkpoint continues exactly as the uninterrupted one.

namespace ulfe::seg {

struct SegTrainConfig {
  index_t epochs_phase1 = 20;  // with augmentation
  index_t epochs_phase2 = 5;   // without
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::vector<index_t> dice_classes = {1, 2, 3, 4, 5};  // validation metric classes
  AugmentationPolicy augmentation;
  std::string checkpoint_dir;  // when set: last.ulfar, best.ulfar, curves.csv
  bool resume = false;         // continue from <checkpoint_dir>/last.ulfar if present
  index_t max_epochs_per_run = -1;  // stop (resumably) after this many epochs; -1 = no cap
};

struct SegEpochStats {
  index_t epoch = 0;
  double train_loss = 0;
  double val_dice = 0;
  bool augmented = false;
};

struct SegTrainResult {
  std::vector<SegEpochStats> curve;
  index_t best_epoch = -1;
  double best_val_dice = 0;
};

// (3, D, H, W) stack of the subject's input contrasts in canonical order.
Tensor<real_t> stack_contrasts(const std::map<std::string, vol::Volume>& vols);

// Mean Dice of argmax predictions over the listed classes, averaged over subjects.
double validate_dice(const SwinSeg<real_t>& model, const std::vector<vol::Subject>& val_set,
                     const std::vector<index_t>& classes);

// On return the model holds the best-validation weights with gradients disabled.
SegTrainResult train_segmentation(SwinSeg<real_t>& model, const std::vector<vol::Subject>& train_set,
                                  const std::vector<vol::Subject>& val_set, const SegTrainConfig& cfg);

}  // namespace ulfe::seg
