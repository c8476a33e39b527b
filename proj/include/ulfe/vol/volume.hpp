#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ulfe/core/tensor.hpp"

namespace ulfe {
namespace vol {

enum class NormState { raw, unit_normalized };

/// A single-contrast scalar volume, (depth, height, width) voxels.
struct Volume {
  Tensor<real_t> data;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // (d, h, w) voxel size in mm
  NormState norm_state = NormState::raw;
};

inline const std::vector<std::string>& contrasts() {
  static const std::vector<std::string> k{"t1", "t2", "flair"};
  return k;
}

constexpr int kNumClasses = 6;  // background, CSF, GM, WM, skull, scalp

/// Paired multi-contrast sample. All present volumes share one shape.
struct Subject {
  std::string id;
  std::map<std::string, Volume> ulf;
  std::map<std::string, Volume> hf;                    // absent at pure inference time
  std::optional<Tensor<std::uint8_t>> labelmap;        // values in {0..5}
  std::optional<Tensor<std::uint8_t>> bg_mask;         // values in {0,1}
  std::optional<Tensor<std::uint8_t>> void_mask;       // inserted-signal-void ground truth, {0,1}
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::uint64_t seed = 0;
};

void validate_subject(const Subject& s);

Volume normalize_intensity(const Volume& v, double lo_pct = 0.5, double hi_pct = 99.5);

/// 1 where gaussian_blur(v, sigma) > threshold * max(blurred), else 0.
Tensor<std::uint8_t> background_mask(const Volume& v, double threshold = 0.05, double sigma = 2.0);

DatasetSplit split_dataset(std::vector<std::string> subject_ids, index_t n_val, std::uint64_t seed);

// Directory layout: <root>/<id>/{ulf,hf}/<contrast>.nii.gz plus optional
// labelmap.nii.gz, mask.nii.gz, void.nii.gz at the subject root.
void save_subject(const std::string& root, const Subject& s);
Subject load_subject(const std::string& root, const std::string& id, bool require_hf);
std::vector<std::string> list_subjects(const std::string& root);

}  // namespace vol
}  // namespace ulfe
