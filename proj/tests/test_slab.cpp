#include <cmath>
#include <vector>

#include "doctest.h"
#include "ulfe/slab/slab.hpp"

using namespace ulfe;
using namespace ulfe::slab;

namespace {

vol::Subject make_depth_subject(index_t depth) {
  // every voxel of slice d holds d/100, so a crop reveals its own start index
  vol::Subject s;
  s.id = "sub";
  vol::Volume v;
  v.data = Tensor<real_t>(Shape{depth, 2, 2});
  for (index_t d = 0; d < depth; ++d)
    for (index_t i = 0; i < 4; ++i) v.data[d * 4 + i] = static_cast<real_t>(d) / 100.0f;
  v.norm_state = vol::NormState::unit_normalized;
  s.ulf["t1"] = v;
  return s;
}

}  // namespace

TEST_CASE("enumerate_slabs start grids") {
  CHECK(enumerate_slabs(50, 40, 5).starts == std::vector<index_t>{0, 5, 10});
  CHECK(enumerate_slabs(40, 40, 5).starts == std::vector<index_t>{0});
  CHECK(enumerate_slabs(44, 40, 5).starts == std::vector<index_t>{0, 4});
  CHECK_THROWS_AS(enumerate_slabs(39, 40, 5), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_slabs(50, 40, 0), std::invalid_argument);
}

TEST_CASE("enumerate_slabs covers every slice for arbitrary geometry") {
  for (index_t depth : {7, 16, 40, 41, 50, 63}) {
    for (index_t slabd : {1, 3, 7, 40}) {
      if (slabd > depth) continue;
      for (index_t stride : {1, 2, 5, 9}) {
        if (stride > slabd && depth > slabd) {
          // the start grid cannot cover the volume; rejected rather than silently gapped
          CHECK_THROWS_AS(enumerate_slabs(depth, slabd, stride), std::invalid_argument);
          continue;
        }
        auto plan = enumerate_slabs(depth, slabd, stride);
        std::vector<int> cover(static_cast<std::size_t>(depth), 0);
        index_t prev = -1;
        for (index_t s : plan.starts) {
          REQUIRE(s > prev);  // sorted and unique
          REQUIRE(s >= 0);
          REQUIRE(s + slabd <= depth);
          for (index_t d = 0; d < slabd; ++d) ++cover[static_cast<std::size_t>(s + d)];
          prev = s;
        }
        for (index_t d = 0; d < depth; ++d) {
          CAPTURE(depth);
          CAPTURE(slabd);
          CAPTURE(stride);
          CAPTURE(d);
          REQUIRE(cover[static_cast<std::size_t>(d)] > 0);
        }
      }
    }
  }
}

TEST_CASE("sample_training_slab crops every field identically and deterministically") {
  vol::Subject s = make_depth_subject(10);
  s.hf["t1"] = s.ulf["t1"];
  s.labelmap = Tensor<std::uint8_t>(Shape{10, 2, 2});
  for (index_t i = 0; i < s.labelmap->numel(); ++i) (*s.labelmap)[i] = static_cast<std::uint8_t>(i % 6);
  s.bg_mask = Tensor<std::uint8_t>(Shape{10, 2, 2}, std::uint8_t{1});

  vol::Subject a = sample_training_slab(s, 4, 42);
  vol::Subject b = sample_training_slab(s, 4, 42);
  CHECK(a.ulf.at("t1").data.vec() == b.ulf.at("t1").data.vec());
  CHECK(a.labelmap->vec() == b.labelmap->vec());

  const auto start = static_cast<index_t>(std::lround(a.ulf.at("t1").data[0] * 100.0f));
  CHECK(a.ulf.at("t1").data.vec() == crop_depth(s.ulf.at("t1").data, start, 4).vec());
  CHECK(a.hf.at("t1").data.vec() == crop_depth(s.hf.at("t1").data, start, 4).vec());
  CHECK(a.labelmap->vec() == crop_depth(*s.labelmap, start, 4).vec());
  CHECK(a.bg_mask->vec() == crop_depth(*s.bg_mask, start, 4).vec());
  CHECK_FALSE(a.void_mask.has_value());

  CHECK(sample_training_slab(s, 10, 7).ulf.at("t1").data.vec() == s.ulf.at("t1").data.vec());  // forced start 0
  CHECK_THROWS_AS(sample_training_slab(s, 11, 7), std::invalid_argument);
}

TEST_CASE("sample_training_slab start distribution is uniform (chi-square)") {
  vol::Subject s = make_depth_subject(50);
  std::vector<index_t> counts(11, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    vol::Subject c = sample_training_slab(s, 40, static_cast<std::uint64_t>(i));
    ++counts[static_cast<std::size_t>(std::lround(c.ulf.at("t1").data[0] * 100.0f))];
  }
  const double expected = n / 11.0;
  double chi2 = 0;
  for (index_t c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 23.21);  // chi-square critical value, 10 dof, p = 0.01
}

TEST_CASE("stitch averages overlaps") {
  SUBCASE("constant slabs give the constant") {
    auto plan = enumerate_slabs(50, 40, 5);
    std::vector<std::pair<index_t, Tensor<real_t>>> slabs;
    for (index_t s : plan.starts) slabs.emplace_back(s, Tensor<real_t>(Shape{2, 40, 2, 3}, 0.75f));
    Tensor<real_t> out = stitch(slabs, plan, Shape{2, 50, 2, 3});
    for (index_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == 0.75f);
  }
  SUBCASE("two overlapping slabs of 0 and 1 give 0.5 in the overlap") {
    auto plan = enumerate_slabs(50, 40, 10);
    REQUIRE(plan.starts == std::vector<index_t>{0, 10});
    std::vector<std::pair<index_t, Tensor<real_t>>> slabs;
    slabs.emplace_back(0, Tensor<real_t>(Shape{1, 40, 2, 2}, 0.0f));
    slabs.emplace_back(10, Tensor<real_t>(Shape{1, 40, 2, 2}, 1.0f));
    Tensor<real_t> out = stitch(slabs, plan, Shape{1, 50, 2, 2});
    for (index_t d = 0; d < 50; ++d) {
      const real_t want = d < 10 ? 0.0f : (d < 40 ? 0.5f : 1.0f);
      for (index_t i = 0; i < 4; ++i) REQUIRE(out[d * 4 + i] == want);
    }
  }
}

TEST_CASE("stitch of extracted slabs is the exact identity") {
  Rng rng(5);
  Tensor<real_t> x(Shape{2, 23, 4, 5});
  for (index_t i = 0; i < x.numel(); ++i) x[i] = static_cast<real_t>(rng.uniform());
  for (auto [slabd, stride] : {std::pair<index_t, index_t>{7, 3}, {23, 1}, {8, 8}, {5, 2}}) {
    auto plan = enumerate_slabs(23, slabd, stride);
    std::vector<std::pair<index_t, Tensor<real_t>>> slabs;
    for (index_t s : plan.starts) slabs.emplace_back(s, extract_slab(x, s, slabd));
    Tensor<real_t> out = stitch(slabs, plan, x.shape());
    CAPTURE(slabd);
    CAPTURE(stride);
    CHECK(out.vec() == x.vec());
  }
}

TEST_CASE("stitch rejects gaps and mismatched slabs") {
  auto plan = enumerate_slabs(50, 40, 5);
  std::vector<std::pair<index_t, Tensor<real_t>>> slabs;
  slabs.emplace_back(0, Tensor<real_t>(Shape{1, 40, 2, 2}, 0.0f));
  CHECK_THROWS_WITH_AS(stitch(slabs, plan, Shape{1, 50, 2, 2}), doctest::Contains("coverage gap"),
                       std::runtime_error);
  slabs.emplace_back(10, Tensor<real_t>(Shape{1, 40, 2, 3}, 0.0f));
  CHECK_THROWS_WITH_AS(stitch(slabs, plan, Shape{1, 50, 2, 2}), doctest::Contains("shape mismatch"),
                       std::invalid_argument);
}

TEST_CASE("enhance_by_slabs with the identity functor is the identity") {
  Rng rng(9);
  Tensor<real_t> x(Shape{3, 17, 3, 4});
  for (index_t i = 0; i < x.numel(); ++i) x[i] = static_cast<real_t>(rng.uniform());
  auto plan = enumerate_slabs(17, 6, 4);
  Tensor<real_t> out = enhance_by_slabs(x, plan, [](const Tensor<real_t>& t) { return t; });
  CHECK(out.vec() == x.vec());

  // channel-reducing enhancer: output channel count follows the functor
  Tensor<real_t> one = enhance_by_slabs(x, plan, [](const Tensor<real_t>& t) {
    Tensor<real_t> y(Shape{1, t.dim(1), t.dim(2), t.dim(3)});
    for (index_t i = 0; i < y.numel(); ++i)
      y[i] = (t[i] + t[i + y.numel()] + t[i + 2 * y.numel()]) / 3.0f;
    return y;
  });
  CHECK(one.shape() == Shape{1, 17, 3, 4});
}
