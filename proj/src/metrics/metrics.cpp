#include "ulfe/metrics/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ulfe::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_pair(const vol::Volume& a, const vol::Volume& b, const Tensor<std::uint8_t>* mask) {
  if (a.data.shape() != b.data.shape()) throw std::invalid_argument("metrics: volume shapes differ");
  if (a.norm_state != vol::NormState::unit_normalized || b.norm_state != vol::NormState::unit_normalized)
    throw std::invalid_argument("metrics: volumes must be unit-normalized");
  if (mask && mask->shape() != a.data.shape())
    throw std::invalid_argument("metrics: mask shape differs from volumes");
}

// mirror index into [0, n): ..., 2, 1 | 0, 1, ..., n-1 | n-2, ... — edge not
// duplicated, matching the reflect padding of the differentiable twin.
index_t mirror(index_t i, index_t n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

std::vector<double> gaussian_kernel(int support, double sigma) {
  if (support < 1 || support % 2 == 0) throw std::invalid_argument("ssim: window support must be odd");
  if (sigma <= 0) throw std::invalid_argument("ssim: sigma must be positive");
  std::vector<double> k(static_cast<std::size_t>(support));
  const int r = support / 2;
  double total = 0;
  for (int i = 0; i < support; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
    total += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= total;
  return k;
}

void smooth_axis(std::vector<double>& v, index_t D, index_t H, index_t W, int axis,
                 const std::vector<double>& ker) {
  const index_t dims[3] = {D, H, W};
  const index_t strides[3] = {H * W, W, 1};
  const index_t n = dims[axis];
  const index_t st = strides[axis];
  const index_t r = static_cast<index_t>(ker.size()) / 2;
  const int a0 = axis == 0 ? 1 : 0;
  const int a1 = axis == 2 ? 1 : 2;
  std::vector<double> line(static_cast<std::size_t>(n));
  for (index_t i = 0; i < dims[a0]; ++i)
    for (index_t j = 0; j < dims[a1]; ++j) {
      const index_t base = i * strides[a0] + j * strides[a1];
      for (index_t t = 0; t < n; ++t) line[static_cast<std::size_t>(t)] = v[static_cast<std::size_t>(base + t * st)];
      for (index_t t = 0; t < n; ++t) {
        double acc = 0;
        for (index_t q = 0; q < static_cast<index_t>(ker.size()); ++q)
          acc += ker[static_cast<std::size_t>(q)] * line[static_cast<std::size_t>(mirror(t + q - r, n))];
        v[static_cast<std::size_t>(base + t * st)] = acc;
      }
    }
}

// mean of `values` over mask voxels (or all voxels when mask is null)
double region_mean(const std::vector<double>& values, const Tensor<std::uint8_t>* mask) {
  if (!mask) {
    double acc = 0;
    for (double v : values) acc += v;
    return acc / static_cast<double>(values.size());
  }
  double acc = 0;
  index_t n = 0;
  for (index_t i = 0; i < mask->numel(); ++i)
    if ((*mask)[i]) {
      acc += values[static_cast<std::size_t>(i)];
      ++n;
    }
  if (n == 0) throw std::runtime_error("metrics: empty mask");
  return acc / static_cast<double>(n);
}

}  // namespace

double ssim(const vol::Volume& a, const vol::Volume& b, const Tensor<std::uint8_t>* mask,
            const SsimParams& params) {
  check_pair(a, b, mask);
  const auto& s = a.data.shape();
  const index_t D = s[0], H = s[1], W = s[2];
  const std::vector<double> ker = gaussian_kernel(params.support, params.sigma);
  const index_t r = static_cast<index_t>(params.support) / 2;
  if (D <= r || H <= r || W <= r) throw std::invalid_argument("ssim: window exceeds volume extent");

  const std::size_t n = static_cast<std::size_t>(a.data.numel());
  std::vector<double> ma(n), mb(n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.data[static_cast<index_t>(i)], y = b.data[static_cast<index_t>(i)];
    ma[i] = x;
    mb[i] = y;
    aa[i] = x * x;
    bb[i] = y * y;
    ab[i] = x * y;
  }
  for (auto* buf : {&ma, &mb, &aa, &bb, &ab})
    for (int axis = 0; axis < 3; ++axis) smooth_axis(*buf, D, H, W, axis, ker);

  std::vector<double> map(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double va = aa[i] - ma[i] * ma[i];
    const double vb = bb[i] - mb[i] * mb[i];
    const double cov = ab[i] - ma[i] * mb[i];
    map[i] = ((2 * ma[i] * mb[i] + params.c1) * (2 * cov + params.c2)) /
             ((ma[i] * ma[i] + mb[i] * mb[i] + params.c1) * (va + vb + params.c2));
  }
  return region_mean(map, mask);
}

double psnr(const vol::Volume& a, const vol::Volume& b, const Tensor<std::uint8_t>* mask) {
  check_pair(a, b, mask);
  std::vector<double> sq(static_cast<std::size_t>(a.data.numel()));
  for (index_t i = 0; i < a.data.numel(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    sq[static_cast<std::size_t>(i)] = d * d;
  }
  const double mse = region_mean(sq, mask);
  if (mse == 0) return kInf;
  return -10.0 * std::log10(mse);
}

double mae(const vol::Volume& a, const vol::Volume& b, const Tensor<std::uint8_t>* mask) {
  check_pair(a, b, mask);
  std::vector<double> ad(static_cast<std::size_t>(a.data.numel()));
  for (index_t i = 0; i < a.data.numel(); ++i)
    ad[static_cast<std::size_t>(i)] = std::fabs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
  return region_mean(ad, mask);
}

double nmse(const vol::Volume& a, const vol::Volume& b, const Tensor<std::uint8_t>* mask) {
  check_pair(a, b, mask);
  double num = 0, den = 0;
  index_t covered = 0;
  for (index_t i = 0; i < a.data.numel(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    num += d * d;
    den += static_cast<double>(b.data[i]) * static_cast<double>(b.data[i]);
    ++covered;
  }
  if (mask && covered == 0) throw std::runtime_error("metrics: empty mask");
  if (den == 0) throw std::runtime_error("nmse: zero-energy reference");
  return num / den;
}

double weighted_score(double ssim_v, double psnr_v, double mae_v, double nmse_v) {
  if (!std::isfinite(ssim_v) || !std::isfinite(psnr_v) || !std::isfinite(mae_v) || !std::isfinite(nmse_v))
    throw std::invalid_argument("weighted_score: non-finite input");
  return 0.7 * ssim_v + 0.1 * psnr_v + 0.1 * (1.0 - mae_v) + 0.1 * (1.0 - nmse_v);
}

MetricReport evaluate_subject(const std::map<std::string, vol::Volume>& pred,
                              const std::map<std::string, vol::Volume>& ref,
                              const Tensor<std::uint8_t>* mask, ScoreAggregation aggregation,
                              const SsimParams& params) {
  if (pred.empty()) throw std::invalid_argument("evaluate_subject: no contrasts");
  if (pred.size() != ref.size()) throw std::invalid_argument("evaluate_subject: contrast mismatch");
  for (const auto& [name, v] : pred)
    if (!ref.count(name)) throw std::invalid_argument("evaluate_subject: contrast mismatch");

  MetricReport rep;
  rep.aggregation = aggregation;
  for (const auto& [name, p] : pred) {
    const vol::Volume& r = ref.at(name);
    ContrastMetrics m;
    m.ssim_unmasked = ssim(p, r, nullptr, params);
    m.psnr_db_unmasked = psnr(p, r, nullptr);
    m.mae_unmasked = mae(p, r, nullptr);
    m.nmse_unmasked = nmse(p, r, nullptr);
    // with no mask the masked columns fall back to the (equivalent) all-ones mask
    m.ssim_masked = mask ? ssim(p, r, mask, params) : m.ssim_unmasked;
    m.psnr_db_masked = mask ? psnr(p, r, mask) : m.psnr_db_unmasked;
    m.mae_masked = mask ? mae(p, r, mask) : m.mae_unmasked;
    m.nmse_masked = mask ? nmse(p, r, mask) : m.nmse_unmasked;
    rep.per_contrast.emplace(name, m);
  }

  const double k = static_cast<double>(rep.per_contrast.size());
  for (const auto& [name, m] : rep.per_contrast) {
    rep.mean.ssim_masked += m.ssim_masked / k;
    rep.mean.ssim_unmasked += m.ssim_unmasked / k;
    rep.mean.psnr_db_masked += m.psnr_db_masked / k;
    rep.mean.psnr_db_unmasked += m.psnr_db_unmasked / k;
    rep.mean.mae_masked += m.mae_masked / k;
    rep.mean.mae_unmasked += m.mae_unmasked / k;
    rep.mean.nmse_masked += m.nmse_masked / k;
    rep.mean.nmse_unmasked += m.nmse_unmasked / k;
  }

  auto compute = [&](double ContrastMetrics::* s, double ContrastMetrics::* p, double ContrastMetrics::* m,
                     double ContrastMetrics::* n, double& out, bool& flag) {
    if (aggregation == ScoreAggregation::mean_then_score) {
      if (!std::isfinite(rep.mean.*p)) {
        flag = true;
        out = kInf;
        return;
      }
      out = weighted_score(rep.mean.*s, rep.mean.*p, rep.mean.*m, rep.mean.*n);
      return;
    }
    double acc = 0;
    for (const auto& [name, cm] : rep.per_contrast) {
      if (!std::isfinite(cm.*p)) {
        flag = true;
        out = kInf;
        return;
      }
      acc += weighted_score(cm.*s, cm.*p, cm.*m, cm.*n);
    }
    out = acc / k;
  };
  compute(&ContrastMetrics::ssim_masked, &ContrastMetrics::psnr_db_masked, &ContrastMetrics::mae_masked,
          &ContrastMetrics::nmse_masked, rep.weighted_masked, rep.inf_contaminated_masked);
  compute(&ContrastMetrics::ssim_unmasked, &ContrastMetrics::psnr_db_unmasked, &ContrastMetrics::mae_unmasked,
          &ContrastMetrics::nmse_unmasked, rep.weighted_unmasked, rep.inf_contaminated_unmasked);
  return rep;
}

namespace {

nlohmann::json num_to_json(double v) {
  if (std::isfinite(v)) return v;
  return "inf";
}

double num_from_json(const nlohmann::json& j) {
  if (j.is_string()) return kInf;
  return j.get<double>();
}

nlohmann::json cm_to_json(const ContrastMetrics& m) {
  return {{"ssim_masked", num_to_json(m.ssim_masked)},
          {"ssim_unmasked", num_to_json(m.ssim_unmasked)},
          {"psnr_db_masked", num_to_json(m.psnr_db_masked)},
          {"psnr_db_unmasked", num_to_json(m.psnr_db_unmasked)},
          {"mae_masked", num_to_json(m.mae_masked)},
          {"mae_unmasked", num_to_json(m.mae_unmasked)},
          {"nmse_masked", num_to_json(m.nmse_masked)},
          {"nmse_unmasked", num_to_json(m.nmse_unmasked)}};
}

ContrastMetrics cm_from_json(const nlohmann::json& j) {
  ContrastMetrics m;
  m.ssim_masked = num_from_json(j.at("ssim_masked"));
  m.ssim_unmasked = num_from_json(j.at("ssim_unmasked"));
  m.psnr_db_masked = num_from_json(j.at("psnr_db_masked"));
  m.psnr_db_unmasked = num_from_json(j.at("psnr_db_unmasked"));
  m.mae_masked = num_from_json(j.at("mae_masked"));
  m.mae_unmasked = num_from_json(j.at("mae_unmasked"));
  m.nmse_masked = num_from_json(j.at("nmse_masked"));
  m.nmse_unmasked = num_from_json(j.at("nmse_unmasked"));
  return m;
}

std::string csv_cell(double v) {
  if (!std::isfinite(v)) return "inf";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

nlohmann::json report_to_json(const MetricReport& report) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, m] : report.per_contrast) per[name] = cm_to_json(m);
  return {{"per_contrast", per},
          {"mean", cm_to_json(report.mean)},
          {"weighted_masked", num_to_json(report.weighted_masked)},
          {"weighted_unmasked", num_to_json(report.weighted_unmasked)},
          {"inf_contaminated_masked", report.inf_contaminated_masked},
          {"inf_contaminated_unmasked", report.inf_contaminated_unmasked},
          {"aggregation",
           report.aggregation == ScoreAggregation::mean_then_score ? "mean_then_score" : "score_then_mean"}};
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport rep;
  for (const auto& [name, m] : j.at("per_contrast").items()) rep.per_contrast.emplace(name, cm_from_json(m));
  rep.mean = cm_from_json(j.at("mean"));
  rep.weighted_masked = num_from_json(j.at("weighted_masked"));
  rep.weighted_unmasked = num_from_json(j.at("weighted_unmasked"));
  rep.inf_contaminated_masked = j.at("inf_contaminated_masked").get<bool>();
  rep.inf_contaminated_unmasked = j.at("inf_contaminated_unmasked").get<bool>();
  rep.aggregation = j.at("aggregation").get<std::string>() == "score_then_mean"
                        ? ScoreAggregation::score_then_mean
                        : ScoreAggregation::mean_then_score;
  return rep;
}

std::string reports_to_csv(const std::vector<std::pair<std::string, MetricReport>>& reports) {
  std::ostringstream os;
  os << "subject,contrast,ssim_masked,ssim_unmasked,psnr_db_masked,psnr_db_unmasked,"
        "mae_masked,mae_unmasked,nmse_masked,nmse_unmasked,weighted_masked,weighted_unmasked\n";
  auto row = [&](const std::string& subject, const std::string& contrast, const ContrastMetrics& m,
                 const std::string& wm, const std::string& wu) {
    os << subject << ',' << contrast << ',' << csv_cell(m.ssim_masked) << ',' << csv_cell(m.ssim_unmasked)
       << ',' << csv_cell(m.psnr_db_masked) << ',' << csv_cell(m.psnr_db_unmasked) << ','
       << csv_cell(m.mae_masked) << ',' << csv_cell(m.mae_unmasked) << ',' << csv_cell(m.nmse_masked) << ','
       << csv_cell(m.nmse_unmasked) << ',' << wm << ',' << wu << '\n';
  };
  for (const auto& [subject, rep] : reports) {
    for (const auto& [contrast, m] : rep.per_contrast) row(subject, contrast, m, "", "");
    row(subject, "mean", rep.mean, csv_cell(rep.weighted_masked), csv_cell(rep.weighted_unmasked));
  }
  return os.str();
}

}  // namespace ulfe::metrics
