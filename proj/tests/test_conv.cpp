#include <cmath>

#include "doctest.h"
#include "ulfe/core/rng.hpp"
#include "ulfe/nn/conv.hpp"
#include "ulfe/nn/gradcheck.hpp"

using namespace ulfe;
using namespace ulfe::nn;

namespace {

Tensor<double> rand_tensor(Shape s, Rng& rng) {
  Tensor<double> t(std::move(s));
  for (index_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Direct convolution, no im2col: the independent oracle.
Tensor<double> conv3d_naive(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                            index_t stride, index_t pad, Pad mode) {
  const index_t Cin = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const index_t Cout = w.dim(0), k = w.dim(2);
  const index_t Do = (D + 2 * pad - k) / stride + 1;
  const index_t Ho = (H + 2 * pad - k) / stride + 1;
  const index_t Wo = (W + 2 * pad - k) / stride + 1;
  auto sample = [&](index_t c, index_t d, index_t h, index_t ww) -> double {
    auto fix = [&](index_t i, index_t n) -> index_t {
      if (mode == Pad::reflect) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        return i;
      }
      return (i < 0 || i >= n) ? -1 : i;
    };
    const index_t dd = fix(d, D), hh = fix(h, H), wf = fix(ww, W);
    if (dd < 0 || hh < 0 || wf < 0) return 0.0;
    return x.at4(c, dd, hh, wf);
  };
  Tensor<double> y(Shape{Cout, Do, Ho, Wo});
  for (index_t co = 0; co < Cout; ++co)
    for (index_t od = 0; od < Do; ++od)
      for (index_t oh = 0; oh < Ho; ++oh)
        for (index_t ow = 0; ow < Wo; ++ow) {
          double acc = b.empty() ? 0.0 : b[co];
          for (index_t ci = 0; ci < Cin; ++ci)
            for (index_t kd = 0; kd < k; ++kd)
              for (index_t kh = 0; kh < k; ++kh)
                for (index_t kw = 0; kw < k; ++kw)
                  acc += w[(((co * Cin + ci) * k + kd) * k + kh) * k + kw] *
                         sample(ci, od * stride - pad + kd, oh * stride - pad + kh,
                                ow * stride - pad + kw);
          y.at4(co, od, oh, ow) = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("conv3d matches the naive oracle across configurations") {
  Rng rng(31);
  struct Cfg {
    index_t cin, cout, d, h, w, k, stride, pad;
    Pad mode;
  };
  const Cfg cfgs[] = {
      {1, 1, 4, 4, 4, 3, 1, 1, Pad::zero},   {2, 3, 5, 4, 6, 3, 1, 1, Pad::zero},
      {2, 2, 6, 6, 6, 3, 2, 1, Pad::zero},   {3, 2, 5, 5, 5, 3, 1, 1, Pad::reflect},
      {1, 2, 8, 7, 9, 7, 1, 3, Pad::reflect}, {2, 4, 4, 4, 4, 2, 2, 0, Pad::zero},
      {3, 1, 5, 5, 5, 1, 1, 0, Pad::zero},   {1, 1, 7, 7, 7, 4, 2, 1, Pad::zero},
      {1, 2, 7, 6, 5, 3, 2, 1, Pad::zero},  // floor semantics on odd extents
  };
  for (const auto& c : cfgs) {
    CAPTURE(c.k);
    CAPTURE(c.stride);
    auto x = leaf<double>(rand_tensor(Shape{c.cin, c.d, c.h, c.w}, rng), false);
    auto w = leaf<double>(rand_tensor(Shape{c.cout, c.cin, c.k, c.k, c.k}, rng), false);
    auto b = leaf<double>(rand_tensor(Shape{c.cout}, rng), false);
    auto y = conv3d(x, w, b, c.stride, c.pad, c.mode);
    Tensor<double> ref =
        conv3d_naive(x->value, w->value, b->value, c.stride, c.pad, c.mode);
    REQUIRE(y->value.shape() == ref.shape());
    double worst = 0;
    for (index_t i = 0; i < ref.numel(); ++i)
      worst = std::max(worst, std::fabs(y->value[i] - ref[i]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("conv3d without bias") {
  Rng rng(32);
  auto x = leaf<double>(rand_tensor(Shape{2, 4, 4, 4}, rng), false);
  auto w = leaf<double>(rand_tensor(Shape{1, 2, 3, 3, 3}, rng), false);
  auto y = conv3d(x, w, Var<double>{}, 1, 1, Pad::zero);
  Tensor<double> ref = conv3d_naive(x->value, w->value, Tensor<double>(), 1, 1, Pad::zero);
  for (index_t i = 0; i < ref.numel(); ++i) CHECK(y->value[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("conv3d gradcheck wrt x, w, b") {
  Rng rng(33);
  for (Pad mode : {Pad::zero, Pad::reflect}) {
    auto x = leaf<double>(rand_tensor(Shape{2, 3, 3, 3}, rng), true);
    auto w = leaf<double>(rand_tensor(Shape{2, 2, 3, 3, 3}, rng), true);
    auto b = leaf<double>(rand_tensor(Shape{2}, rng), true);
    CHECK(gradcheck<double>({x, w, b},
                            [&] { return mean(square(conv3d(x, w, b, 1, 1, mode))); }) < 1e-6);
  }
}

TEST_CASE("strided conv3d gradcheck") {
  Rng rng(34);
  auto x = leaf<double>(rand_tensor(Shape{1, 4, 4, 4}, rng), true);
  auto w = leaf<double>(rand_tensor(Shape{2, 1, 2, 2, 2}, rng), true);
  auto b = leaf<double>(rand_tensor(Shape{2}, rng), true);
  CHECK(gradcheck<double>({x, w, b}, [&] { return mean(square(conv3d(x, w, b, 2, 0, Pad::zero))); }) <
        1e-6);
}

TEST_CASE("conv3d rejects incompatible geometry") {
  auto x = leaf<double>(Tensor<double>(Shape{1, 5, 5, 5}), false);
  auto w = leaf<double>(Tensor<double>(Shape{1, 1, 7, 7, 7}), false);
  CHECK_THROWS(conv3d(x, w, Var<double>{}, 1, 0, Pad::zero));  // extent 5 < k 7
  auto w2 = leaf<double>(Tensor<double>(Shape{1, 2, 3, 3, 3}), false);
  CHECK_THROWS(conv3d(x, w2, Var<double>{}, 1, 1, Pad::zero));  // channel mismatch
  auto x2 = leaf<double>(Tensor<double>(Shape{1, 1, 5, 5}), false);
  auto w3 = leaf<double>(Tensor<double>(Shape{1, 1, 3, 3, 3}), false);
  CHECK_THROWS(conv3d(x2, w3, Var<double>{}, 1, 2, Pad::reflect));  // reflect pad exceeds extent 1
}

TEST_CASE("resize_trilinear: identity, constant preservation, mean preservation on 2x") {
  Rng rng(35);
  auto x = leaf<double>(rand_tensor(Shape{2, 4, 4, 4}, rng), false);
  auto same = resize_trilinear(x, 4, 4, 4);
  CHECK(same.get() == x.get());  // exact-size resize is a no-op

  auto c = leaf<double>(Tensor<double>(Shape{1, 3, 3, 3}, 0.7), false);
  auto up = resize_trilinear(c, 6, 6, 6);
  for (index_t i = 0; i < up->value.numel(); ++i) CHECK(up->value[i] == doctest::Approx(0.7));

  // 2x upsample with half-pixel centers preserves the volume mean
  auto y = resize_trilinear(x, 8, 8, 8);
  double m_in = 0, m_out = 0;
  for (index_t i = 0; i < x->value.numel(); ++i) m_in += x->value[i];
  for (index_t i = 0; i < y->value.numel(); ++i) m_out += y->value[i];
  CHECK(m_out / y->value.numel() == doctest::Approx(m_in / x->value.numel()).epsilon(0.02));
}

TEST_CASE("resize_trilinear gradcheck up and down") {
  Rng rng(36);
  auto x = leaf<double>(rand_tensor(Shape{2, 3, 3, 3}, rng), true);
  CHECK(gradcheck<double>({x}, [&] { return mean(square(resize_trilinear(x, 5, 6, 4))); }) < 1e-6);
  auto y = leaf<double>(rand_tensor(Shape{1, 6, 6, 6}, rng), true);
  CHECK(gradcheck<double>({y}, [&] { return mean(square(resize_trilinear(y, 3, 3, 3))); }) < 1e-6);
}
