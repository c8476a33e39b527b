#include <cmath>

#include "doctest.h"
#include "ulfe/core/rng.hpp"
#include "ulfe/nn/attention.hpp"
#include "ulfe/nn/gradcheck.hpp"

using namespace ulfe;
using namespace ulfe::nn;

namespace {

Tensor<double> rand_tensor(Shape s, Rng& rng) {
  Tensor<double> t(std::move(s));
  for (index_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Scalar-loop attention oracle.
Tensor<double> mhsa_naive(const Tensor<double>& qkv, const Tensor<double>& bias, const Tensor<double>* mask,
                          index_t nW, index_t T, index_t heads) {
  const index_t E = qkv.dim(1) / 3, dh = E / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor<double> out(Shape{nW * T, E});
  for (index_t w = 0; w < nW; ++w)
    for (index_t a = 0; a < heads; ++a) {
      std::vector<std::vector<double>> p(T, std::vector<double>(T));
      for (index_t i = 0; i < T; ++i) {
        double mx = -1e300;
        for (index_t j = 0; j < T; ++j) {
          double s = 0;
          for (index_t e = 0; e < dh; ++e)
            s += qkv[(w * T + i) * 3 * E + a * dh + e] * qkv[(w * T + j) * 3 * E + E + a * dh + e];
          s *= scale;
          s += bias[(a * T + i) * T + j];
          if (mask) s += (*mask)[(w * T + i) * T + j];
          p[i][j] = s;
          mx = std::max(mx, s);
        }
        double z = 0;
        for (index_t j = 0; j < T; ++j) {
          p[i][j] = std::exp(p[i][j] - mx);
          z += p[i][j];
        }
        for (index_t j = 0; j < T; ++j) p[i][j] /= z;
      }
      for (index_t i = 0; i < T; ++i)
        for (index_t e = 0; e < dh; ++e) {
          double acc = 0;
          for (index_t j = 0; j < T; ++j)
            acc += p[i][j] * qkv[(w * T + j) * 3 * E + 2 * E + a * dh + e];
          out[(w * T + i) * E + a * dh + e] = acc;
        }
    }
  return out;
}

}  // namespace

TEST_CASE("windowed_mhsa matches the naive oracle") {
  Rng rng(41);
  const index_t nW = 3, T = 8, heads = 2, E = 6;
  auto qkv = leaf<double>(rand_tensor(Shape{nW * T, 3 * E}, rng), false);
  auto bias = leaf<double>(rand_tensor(Shape{heads, T, T}, rng), false);
  auto mask = std::make_shared<Tensor<double>>(Shape{nW, T, T});
  for (index_t i = 0; i < mask->numel(); ++i) (*mask)[i] = (i % 7 == 0) ? -100.0 : 0.0;

  auto y0 = windowed_mhsa(qkv, bias, nullptr, nW, T, heads);
  Tensor<double> r0 = mhsa_naive(qkv->value, bias->value, nullptr, nW, T, heads);
  for (index_t i = 0; i < r0.numel(); ++i) CHECK(y0->value[i] == doctest::Approx(r0[i]).epsilon(1e-10));

  auto y1 = windowed_mhsa(qkv, bias, mask, nW, T, heads);
  Tensor<double> r1 = mhsa_naive(qkv->value, bias->value, mask.get(), nW, T, heads);
  for (index_t i = 0; i < r1.numel(); ++i) CHECK(y1->value[i] == doctest::Approx(r1[i]).epsilon(1e-10));
}

TEST_CASE("windowed_mhsa gradcheck wrt qkv and bias") {
  Rng rng(42);
  const index_t nW = 2, T = 4, heads = 2, E = 4;
  auto qkv = leaf<double>(rand_tensor(Shape{nW * T, 3 * E}, rng), true);
  auto bias = leaf<double>(rand_tensor(Shape{heads, T, T}, rng), true);
  auto mask = std::make_shared<Tensor<double>>(Shape{nW, T, T});
  for (index_t i = 0; i < mask->numel(); ++i) (*mask)[i] = (i % 5 == 0) ? -100.0 : 0.0;
  CHECK(gradcheck<double>({qkv, bias}, [&] {
          return mean(square(windowed_mhsa(qkv, bias, mask, nW, T, heads)));
        }) < 1e-6);
}

TEST_CASE("a -100 mask entry suppresses attention to that key") {
  Rng rng(43);
  const index_t nW = 1, T = 4, heads = 1, E = 2;
  auto qkv = leaf<double>(rand_tensor(Shape{T, 3 * E}, rng), false);
  auto bias = leaf<double>(Tensor<double>(Shape{heads, T, T}, 0.0), false);
  auto mask = std::make_shared<Tensor<double>>(Shape{nW, T, T}, 0.0);
  (*mask)[0 * T + 2] = -100.0;  // query 0 must ignore key 2

  // make key 2's value huge: if it leaked, output row 0 would move materially
  Tensor<double> qkv_hot = qkv->value;
  for (index_t e = 0; e < E; ++e) qkv_hot[2 * 3 * E + 2 * E + e] = 1000.0;
  auto hot = leaf<double>(qkv_hot, false);
  auto y = windowed_mhsa(hot, bias, mask, nW, T, heads);
  CHECK(std::fabs(y->value[0]) < 1.0);
  CHECK(std::fabs(y->value[1]) < 1.0);
}

TEST_CASE("windowed_mhsa validates shapes") {
  auto qkv = leaf<double>(Tensor<double>(Shape{8, 12}), false);
  auto bias = leaf<double>(Tensor<double>(Shape{2, 4, 4}), false);
  CHECK_THROWS(windowed_mhsa(qkv, bias, nullptr, 2, 4, 3));  // E=4 not divisible by 3 heads
  auto bad_bias = leaf<double>(Tensor<double>(Shape{2, 3, 3}), false);
  CHECK_THROWS(windowed_mhsa(qkv, bad_bias, nullptr, 2, 4, 2));
}
