#include <algorithm>
#include <filesystem>

#include "ulfe/core/rng.hpp"
#include "ulfe/vol/filters.hpp"
#include "ulfe/vol/nifti.hpp"
#include "ulfe/vol/volume.hpp"

namespace fs = std::filesystem;

namespace ulfe {
namespace vol {

void validate_subject(const Subject& s) {
  if (s.id.empty()) throw std::invalid_argument("subject: empty id");
  if (s.ulf.empty()) throw std::invalid_argument("subject " + s.id + ": no ULF volumes");
  const Shape* ref = nullptr;
  auto check_shape = [&](const Shape& sh, const std::string& what) {
    if (!ref) {
      ref = &sh;
      return;
    }
    if (sh != *ref)
      throw std::invalid_argument("subject " + s.id + ": " + what + " shape " + shape_str(sh) +
                                  " differs from " + shape_str(*ref));
  };
  for (const auto& [c, v] : s.ulf) check_shape(v.data.shape(), "ulf/" + c);
  for (const auto& [c, v] : s.hf) check_shape(v.data.shape(), "hf/" + c);
  if (s.labelmap) {
    check_shape(s.labelmap->shape(), "labelmap");
    for (index_t i = 0; i < s.labelmap->numel(); ++i)
      if ((*s.labelmap)[i] >= kNumClasses)
        throw std::invalid_argument("subject " + s.id + ": labelmap value out of {0..5}");
  }
  if (s.bg_mask) {
    check_shape(s.bg_mask->shape(), "bg_mask");
    for (index_t i = 0; i < s.bg_mask->numel(); ++i)
      if ((*s.bg_mask)[i] > 1) throw std::invalid_argument("subject " + s.id + ": bg_mask not binary");
  }
  if (s.void_mask) check_shape(s.void_mask->shape(), "void_mask");
}

namespace {

// Linear-interpolated percentile of a sorted copy, numpy-style.
double percentile(AlignedVec<real_t> sorted_copy, double pct) {
  std::sort(sorted_copy.begin(), sorted_copy.end());
  const double rank = pct / 100.0 * static_cast<double>(sorted_copy.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(lo + 1, sorted_copy.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return (1.0 - frac) * sorted_copy[lo] + frac * sorted_copy[hi];
}

}  // namespace

Volume normalize_intensity(const Volume& v, double lo_pct, double hi_pct) {
  if (v.norm_state != NormState::raw)
    throw std::invalid_argument("normalize_intensity: volume already normalized");
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
    throw std::invalid_argument("normalize_intensity: need 0 <= lo < hi <= 100");
  const double p_lo = percentile(v.data.vec(), lo_pct);
  const double p_hi = percentile(v.data.vec(), hi_pct);
  if (p_hi <= p_lo) throw std::runtime_error("normalize_intensity: constant volume");
  Volume out;
  out.spacing = v.spacing;
  out.norm_state = NormState::unit_normalized;
  out.data = Tensor<real_t>(v.data.shape());
  const double inv = 1.0 / (p_hi - p_lo);
  for (index_t i = 0; i < v.data.numel(); ++i) {
    double x = (static_cast<double>(v.data[i]) - p_lo) * inv;
    out.data[i] = static_cast<real_t>(std::clamp(x, 0.0, 1.0));
  }
  return out;
}

Tensor<std::uint8_t> background_mask(const Volume& v, double threshold, double sigma) {
  if (v.norm_state != NormState::unit_normalized)
    throw std::invalid_argument("background_mask: volume must be unit-normalized");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("background_mask: threshold must be in (0,1)");
  Tensor<real_t> smooth = gaussian_blur(v.data, sigma);
  real_t mx = 0;
  for (index_t i = 0; i < smooth.numel(); ++i) mx = std::max(mx, smooth[i]);
  const real_t cut = static_cast<real_t>(threshold) * mx;
  Tensor<std::uint8_t> mask(v.data.shape());
  for (index_t i = 0; i < smooth.numel(); ++i) mask[i] = smooth[i] > cut ? 1 : 0;
  return mask;
}

DatasetSplit split_dataset(std::vector<std::string> subject_ids, index_t n_val, std::uint64_t seed) {
  if (n_val <= 0 || n_val >= static_cast<index_t>(subject_ids.size()))
    throw std::invalid_argument("split_dataset: n_val out of range");
  std::sort(subject_ids.begin(), subject_ids.end());  // independent of listing order
  Rng rng(derive_seed(seed, 0x73706c69));
  rng.shuffle(subject_ids);
  DatasetSplit split;
  split.seed = seed;
  split.val.assign(subject_ids.begin(), subject_ids.begin() + n_val);
  split.train.assign(subject_ids.begin() + n_val, subject_ids.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

void save_subject(const std::string& root, const Subject& s) {
  validate_subject(s);
  const fs::path base = fs::path(root) / s.id;
  fs::create_directories(base / "ulf");
  if (!s.hf.empty()) fs::create_directories(base / "hf");
  const auto& spacing = s.ulf.begin()->second.spacing;
  for (const auto& [c, v] : s.ulf) write_nifti((base / "ulf" / (c + ".nii.gz")).string(), v);
  for (const auto& [c, v] : s.hf) write_nifti((base / "hf" / (c + ".nii.gz")).string(), v);
  if (s.labelmap) write_nifti_u8((base / "labelmap.nii.gz").string(), *s.labelmap, spacing);
  if (s.bg_mask) write_nifti_u8((base / "mask.nii.gz").string(), *s.bg_mask, spacing);
  if (s.void_mask) write_nifti_u8((base / "void.nii.gz").string(), *s.void_mask, spacing);
}

Subject load_subject(const std::string& root, const std::string& id, bool require_hf) {
  const fs::path base = fs::path(root) / id;
  if (!fs::is_directory(base)) throw std::runtime_error("dataset: no subject directory " + base.string());
  Subject s;
  s.id = id;
  for (const auto& c : contrasts()) {
    const fs::path p = base / "ulf" / (c + ".nii.gz");
    if (!fs::exists(p)) throw std::runtime_error("dataset: missing " + p.string());
    Volume v = read_nifti(p.string());
    v.norm_state = NormState::unit_normalized;  // on-disk volumes are stored normalized
    s.ulf.emplace(c, std::move(v));
  }
  for (const auto& c : contrasts()) {
    const fs::path p = base / "hf" / (c + ".nii.gz");
    if (fs::exists(p)) {
      Volume v = read_nifti(p.string());
      v.norm_state = NormState::unit_normalized;
      s.hf.emplace(c, std::move(v));
    } else if (require_hf) {
      throw std::runtime_error("dataset: missing " + p.string());
    }
  }
  if (fs::exists(base / "labelmap.nii.gz")) s.labelmap = read_nifti_u8((base / "labelmap.nii.gz").string());
  if (fs::exists(base / "mask.nii.gz")) s.bg_mask = read_nifti_u8((base / "mask.nii.gz").string());
  if (fs::exists(base / "void.nii.gz")) s.void_mask = read_nifti_u8((base / "void.nii.gz").string());
  validate_subject(s);
  return s;
}

std::vector<std::string> list_subjects(const std::string& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset: no such directory " + root);
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::is_directory(e.path() / "ulf")) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace vol
}  // namespace ulfe
