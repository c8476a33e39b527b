#include <cmath>
#include <limits>

#include "doctest.h"
#include "ulfe/core/rng.hpp"
#include "ulfe/metrics/diff.hpp"
#include "ulfe/metrics/metrics.hpp"
#include "ulfe/nn/gradcheck.hpp"

using namespace ulfe;
using namespace ulfe::metrics;

namespace {

vol::Volume make_vol(const Shape& s, Rng& rng) {
  vol::Volume v;
  v.data = Tensor<real_t>(s);
  for (index_t i = 0; i < v.data.numel(); ++i) v.data[i] = static_cast<real_t>(rng.uniform());
  v.norm_state = vol::NormState::unit_normalized;
  return v;
}

vol::Volume const_vol(const Shape& s, real_t fill) {
  vol::Volume v;
  v.data = Tensor<real_t>(s, fill);
  v.norm_state = vol::NormState::unit_normalized;
  return v;
}

Tensor<std::uint8_t> ones_mask(const Shape& s) { return Tensor<std::uint8_t>(s, std::uint8_t{1}); }

}  // namespace

TEST_CASE("ssim identity, anticorrelation, mask neutrality") {
  Rng rng(3);
  vol::Volume a = make_vol(Shape{10, 11, 12}, rng);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  vol::Volume b = a;
  for (index_t i = 0; i < b.data.numel(); ++i) b.data[i] = 1.0f - b.data[i];
  CHECK(ssim(a, b) < 0.0);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));

  auto mask = ones_mask(a.data.shape());
  CHECK(ssim(a, b, &mask) == doctest::Approx(ssim(a, b)).epsilon(1e-12));

  Tensor<std::uint8_t> empty(a.data.shape(), std::uint8_t{0});
  CHECK_THROWS_WITH_AS(ssim(a, b, &empty), doctest::Contains("empty mask"), std::runtime_error);
}

TEST_CASE("psnr analytic values and restriction oracle") {
  vol::Volume a = const_vol(Shape{6, 6, 6}, 0.5f);
  vol::Volume b = const_vol(Shape{6, 6, 6}, 0.6f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());

  // identical on the first half of depth, noisy on the second; mask the noisy half
  Rng rng(11);
  vol::Volume p = make_vol(Shape{8, 5, 5}, rng);
  vol::Volume q = p;
  Tensor<std::uint8_t> half(p.data.shape(), std::uint8_t{0});
  double mse_half = 0;
  index_t n_half = 0;
  for (index_t d = 4; d < 8; ++d)
    for (index_t i = 0; i < 25; ++i) {
      const index_t idx = d * 25 + i;
      q.data[idx] = static_cast<real_t>(rng.uniform());
      half[idx] = 1;
      const double df = static_cast<double>(p.data[idx]) - static_cast<double>(q.data[idx]);
      mse_half += df * df;
      ++n_half;
    }
  mse_half /= static_cast<double>(n_half);
  CHECK(psnr(p, q, &half) == doctest::Approx(-10.0 * std::log10(mse_half)).epsilon(1e-12));
  CHECK(psnr(p, q) == doctest::Approx(psnr(q, p)).epsilon(1e-12));
}

TEST_CASE("mae analytic values and restriction oracle") {
  vol::Volume a = const_vol(Shape{4, 4, 4}, 0.2f);
  CHECK(mae(a, a) == 0.0);
  vol::Volume b = const_vol(Shape{4, 4, 4}, 0.2f + 0.031f);
  CHECK(mae(a, b) == doctest::Approx(0.031).epsilon(1e-6));

  Rng rng(13);
  vol::Volume p = make_vol(Shape{5, 5, 5}, rng);
  vol::Volume q = make_vol(Shape{5, 5, 5}, rng);
  Tensor<std::uint8_t> m(p.data.shape(), std::uint8_t{0});
  double acc = 0;
  index_t n = 0;
  for (index_t i = 0; i < m.numel(); i += 3) {
    m[i] = 1;
    acc += std::fabs(static_cast<double>(p.data[i]) - static_cast<double>(q.data[i]));
    ++n;
  }
  CHECK(mae(p, q, &m) == doctest::Approx(acc / n).epsilon(1e-12));
  CHECK(mae(p, q) == doctest::Approx(mae(q, p)).epsilon(1e-12));
}

TEST_CASE("nmse analytic values and asymmetry") {
  Rng rng(17);
  vol::Volume b = make_vol(Shape{6, 5, 4}, rng);
  CHECK(nmse(b, b) == 0.0);

  vol::Volume zero = const_vol(Shape{6, 5, 4}, 0.0f);
  CHECK(nmse(zero, b) == doctest::Approx(1.0).epsilon(1e-12));

  vol::Volume twice = b;
  for (index_t i = 0; i < twice.data.numel(); ++i) twice.data[i] *= 2.0f;
  CHECK(nmse(twice, b) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(nmse(b, twice) == doctest::Approx(0.25).epsilon(1e-5));  // asymmetric in the reference

  CHECK_THROWS_WITH_AS(nmse(b, zero), doctest::Contains("zero-energy"), std::runtime_error);
}

TEST_CASE("weighted_score arithmetic and monotonicity") {
  CHECK(std::fabs(weighted_score(0.711, 30.416, 0.067, 0.141) - 3.719) <= 0.0005 + 1e-12);
  CHECK(std::fabs(weighted_score(0.832, 23.372, 0.031, 0.063) - 3.110) <= 0.0005 + 1e-12);
  CHECK(weighted_score(1.0, 20.0, 0.0, 0.0) == doctest::Approx(2.9).epsilon(1e-12));
  CHECK_THROWS_AS(weighted_score(std::numeric_limits<double>::infinity(), 1, 0, 0), std::invalid_argument);

  const double base = weighted_score(0.8, 25.0, 0.05, 0.1);
  CHECK(weighted_score(0.9, 25.0, 0.05, 0.1) > base);
  CHECK(weighted_score(0.8, 26.0, 0.05, 0.1) > base);
  CHECK(weighted_score(0.8, 25.0, 0.06, 0.1) < base);
  CHECK(weighted_score(0.8, 25.0, 0.05, 0.2) < base);
}

TEST_CASE("masked metrics with all-ones mask equal unmasked") {
  Rng rng(29);
  vol::Volume a = make_vol(Shape{7, 8, 9}, rng);
  vol::Volume b = make_vol(Shape{7, 8, 9}, rng);
  auto mask = ones_mask(a.data.shape());
  CHECK(ssim(a, b, &mask) == doctest::Approx(ssim(a, b)).epsilon(1e-12));
  CHECK(psnr(a, b, &mask) == doctest::Approx(psnr(a, b)).epsilon(1e-12));
  CHECK(mae(a, b, &mask) == doctest::Approx(mae(a, b)).epsilon(1e-12));
  CHECK(nmse(a, b, &mask) == doctest::Approx(nmse(a, b)).epsilon(1e-12));
}

TEST_CASE("differentiable twins agree with the reference route") {
  Rng rng(31);
  vol::Volume va = make_vol(Shape{6, 7, 8}, rng);
  vol::Volume vb = make_vol(Shape{6, 7, 8}, rng);

  Tensor<double> ta(Shape{1, 6, 7, 8}), tb(Shape{1, 6, 7, 8});
  for (index_t i = 0; i < ta.numel(); ++i) {
    ta[i] = static_cast<double>(va.data[i]);
    tb[i] = static_cast<double>(vb.data[i]);
  }
  nn::NoGradGuard ng;
  auto a = nn::constant(ta);
  auto b = nn::constant(tb);

  CHECK(ssim_var(a, b)->value[0] == doctest::Approx(ssim(va, vb)).epsilon(1e-9));
  CHECK(psnr_capped_var(a, b)->value[0] == doctest::Approx(psnr(va, vb)).epsilon(1e-9));
  CHECK(mae_var(a, b)->value[0] == doctest::Approx(mae(va, vb)).epsilon(1e-9));
  CHECK(nmse_var(a, b)->value[0] == doctest::Approx(nmse(va, vb)).epsilon(1e-9));
  const double w_ref = weighted_score(ssim(va, vb), psnr(va, vb), mae(va, vb), nmse(va, vb));
  CHECK(weighted_score_var(a, b)->value[0] == doctest::Approx(w_ref).epsilon(1e-9));
}

TEST_CASE("psnr cap saturates with zero gradient at identity") {
  Tensor<double> t(Shape{1, 4, 4, 4}, 0.3);
  auto a = nn::leaf(t, true);
  auto b = nn::constant(t);
  auto p = psnr_capped_var(a, b, 50.0);
  CHECK(p->value[0] == doctest::Approx(50.0).epsilon(1e-12));
  nn::backward(p);
  for (index_t i = 0; i < a->grad.numel(); ++i) CHECK(a->grad[i] == 0.0);
}

TEST_CASE("differentiable metric gradients match finite differences") {
  Rng rng(37);
  Tensor<double> ta(Shape{2, 4, 4, 5}), tb(Shape{2, 4, 4, 5});
  for (index_t i = 0; i < ta.numel(); ++i) {
    ta[i] = rng.uniform();
    tb[i] = rng.uniform();
  }
  auto a = nn::leaf(ta, true);
  auto b = nn::leaf(tb, true);
  SsimParams small;
  small.support = 3;
  SUBCASE("ssim") {
    CHECK(nn::gradcheck<double>({a, b}, [&] { return ssim_var(a, b, small); }) < 1e-6);
  }
  SUBCASE("weighted score") {
    CHECK(nn::gradcheck<double>({a, b}, [&] { return weighted_score_var(a, b, 50.0, small); }) < 1e-6);
  }
}

TEST_CASE("evaluate_subject aggregates, flags infinities, serializes") {
  Rng rng(41);
  std::map<std::string, vol::Volume> ref, pred;
  for (const auto& c : vol::contrasts()) {
    ref[c] = make_vol(Shape{16, 16, 16}, rng);
    pred[c] = ref[c];
    for (index_t i = 0; i < pred[c].data.numel(); ++i)
      pred[c].data[i] += static_cast<real_t>(rng.normal(0.0, 0.05));
  }
  auto mask = ones_mask(Shape{16, 16, 16});

  SUBCASE("noise-injection psnr oracle") {
    MetricReport rep = evaluate_subject(pred, ref, &mask);
    double mse = 0;
    for (index_t i = 0; i < ref.at("t1").data.numel(); ++i) {
      const double d = static_cast<double>(pred.at("t1").data[i]) - static_cast<double>(ref.at("t1").data[i]);
      mse += d * d;
    }
    mse /= static_cast<double>(ref.at("t1").data.numel());
    CHECK(rep.per_contrast.at("t1").psnr_db_unmasked == doctest::Approx(-10.0 * std::log10(mse)).epsilon(1e-12));
    CHECK(std::fabs(rep.per_contrast.at("t1").psnr_db_unmasked - (-10.0 * std::log10(0.05 * 0.05))) < 0.5);
    CHECK_FALSE(rep.inf_contaminated_unmasked);
    CHECK(std::isfinite(rep.weighted_unmasked));
    // the weighted score is affine in the metrics, so both aggregation orders agree
    MetricReport alt = evaluate_subject(pred, ref, &mask, ScoreAggregation::score_then_mean);
    CHECK(alt.weighted_masked == doctest::Approx(rep.weighted_masked).epsilon(1e-12));
  }

  SUBCASE("identity prediction is inf-contaminated") {
    MetricReport rep = evaluate_subject(ref, ref, &mask);
    CHECK(rep.per_contrast.at("t2").ssim_unmasked == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.per_contrast.at("t2").mae_unmasked == 0.0);
    CHECK(rep.per_contrast.at("t2").nmse_unmasked == 0.0);
    CHECK(rep.per_contrast.at("t2").psnr_db_unmasked == std::numeric_limits<double>::infinity());
    CHECK(rep.inf_contaminated_unmasked);
    CHECK(rep.inf_contaminated_masked);
    nlohmann::json j = report_to_json(rep);
    CHECK(j.at("weighted_unmasked") == "inf");
    CHECK(j.at("per_contrast").at("t1").at("psnr_db_unmasked") == "inf");
  }

  SUBCASE("json round-trip is lossless") {
    MetricReport rep = evaluate_subject(pred, ref, &mask, ScoreAggregation::score_then_mean);
    nlohmann::json j = nlohmann::json::parse(report_to_json(rep).dump());
    MetricReport back = report_from_json(j);
    CHECK(back.weighted_masked == rep.weighted_masked);
    CHECK(back.weighted_unmasked == rep.weighted_unmasked);
    CHECK(back.aggregation == rep.aggregation);
    for (const auto& [name, m] : rep.per_contrast) {
      CHECK(back.per_contrast.at(name).ssim_masked == m.ssim_masked);
      CHECK(back.per_contrast.at(name).psnr_db_unmasked == m.psnr_db_unmasked);
      CHECK(back.per_contrast.at(name).mae_masked == m.mae_masked);
      CHECK(back.per_contrast.at(name).nmse_unmasked == m.nmse_unmasked);
    }
  }

  SUBCASE("csv rows and inf cells") {
    MetricReport rep = evaluate_subject(ref, ref, &mask);
    std::string csv = reports_to_csv({{"subj1", rep}});
    CHECK(csv.find("subject,contrast,ssim_masked") == 0);
    CHECK(csv.find("subj1,mean,") != std::string::npos);
    CHECK(csv.find("inf") != std::string::npos);
    index_t lines = 0;
    for (char ch : csv)
      if (ch == '\n') ++lines;
    CHECK(lines == 1 + 3 + 1);  // header + contrasts + mean
  }

  SUBCASE("contrast mismatch is rejected") {
    auto missing = pred;
    missing.erase("t1");
    CHECK_THROWS_WITH_AS(evaluate_subject(missing, ref, &mask), doctest::Contains("contrast mismatch"),
                         std::invalid_argument);
  }
}
