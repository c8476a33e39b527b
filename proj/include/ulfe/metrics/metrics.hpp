#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ulfe/vol/volume.hpp"

namespace ulfe::metrics {

struct SsimParams {
  double sigma = 1.5;
  int support = 7;       // cubic window edge, odd
  double c1 = 1e-4;      // (0.01 * L)^2, L = 1 on unit-normalized data
  double c2 = 9e-4;      // (0.03 * L)^2
};

// Reference evaluation metrics, computed in double. `mask` restricts the mean to
// voxels where mask = 1; pass nullptr for the unmasked variant.
double ssim(const vol::Volume& a, const vol::Volume& b, const Tensor<std::uint8_t>* mask = nullptr,
            const SsimParams& params = {});
double psnr(const vol::Volume& a, const vol::Volume& b, const Tensor<std::uint8_t>* mask = nullptr);
double mae(const vol::Volume& a, const vol::Volume& b, const Tensor<std::uint8_t>* mask = nullptr);
double nmse(const vol::Volume& a, const vol::Volume& b, const Tensor<std::uint8_t>* mask = nullptr);

// 0.7*ssim + 0.1*psnr + 0.1*(1 - mae) + 0.1*(1 - nmse); rejects non-finite inputs.
double weighted_score(double ssim_v, double psnr_v, double mae_v, double nmse_v);

struct ContrastMetrics {
  double ssim_masked = 0, ssim_unmasked = 0;
  double psnr_db_masked = 0, psnr_db_unmasked = 0;
  double mae_masked = 0, mae_unmasked = 0;
  double nmse_masked = 0, nmse_unmasked = 0;
};

// The weighted score is computed either on metric means across contrasts
// (mean_then_score) or per contrast with the scores averaged (score_then_mean).
enum class ScoreAggregation { mean_then_score, score_then_mean };

struct MetricReport {
  std::map<std::string, ContrastMetrics> per_contrast;
  ContrastMetrics mean;  // plain means across contrasts
  double weighted_masked = 0, weighted_unmasked = 0;
  bool inf_contaminated_masked = false, inf_contaminated_unmasked = false;
  ScoreAggregation aggregation = ScoreAggregation::mean_then_score;
};

// All four metrics, masked and unmasked, per contrast plus aggregates. An infinite
// PSNR (identical volumes) sets the inf-contaminated flag and an infinite weighted
// score instead of failing.
MetricReport evaluate_subject(const std::map<std::string, vol::Volume>& pred,
                              const std::map<std::string, vol::Volume>& ref,
                              const Tensor<std::uint8_t>* mask,
                              ScoreAggregation aggregation = ScoreAggregation::mean_then_score,
                              const SsimParams& params = {});

// JSON round-trip; non-finite values are serialized as the string "inf".
nlohmann::json report_to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);

// One CSV row per (subject, contrast) plus a "mean" row per subject carrying the
// weighted scores; non-finite cells render as "inf".
std::string reports_to_csv(const std::vector<std::pair<std::string, MetricReport>>& reports);

}  // namespace ulfe::metrics
