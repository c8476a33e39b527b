#include "doctest.h"
#include "ulfe/core/tensor.hpp"

using namespace ulfe;

TEST_CASE("tensor shape and fill") {
  Tensor<float> t(Shape{2, 3, 4}, 1.5f);
  CHECK(t.rank() == 3);
  CHECK(t.numel() == 24);
  CHECK(t.dim(2) == 4);
  CHECK(t[23] == 1.5f);
  t.fill(0.0f);
  CHECK(t[0] == 0.0f);
}

TEST_CASE("tensor rejects non-positive extents") {
  CHECK_THROWS(Tensor<float>(Shape{2, 0, 3}));
  CHECK_THROWS(Tensor<float>(Shape{-1}));
}

TEST_CASE("tensor data constructor validates size") {
  AlignedVec<float> v(6, 2.0f);
  Tensor<float> t(Shape{2, 3}, v);
  CHECK(t.numel() == 6);
  CHECK_THROWS(Tensor<float>(Shape{2, 4}, v));
}

TEST_CASE("row-major indexing: last axis fastest") {
  Tensor<float> t(Shape{2, 3, 4});
  for (index_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i);
  CHECK(t.at3(0, 0, 1) == 1.0f);
  CHECK(t.at3(0, 1, 0) == 4.0f);
  CHECK(t.at3(1, 0, 0) == 12.0f);
  Tensor<float> u(Shape{2, 2, 3, 4});
  for (index_t i = 0; i < u.numel(); ++i) u[i] = static_cast<float>(i);
  CHECK(u.at4(1, 0, 0, 0) == 24.0f);
}

TEST_CASE("reshape preserves data and validates count") {
  Tensor<float> t(Shape{2, 6});
  for (index_t i = 0; i < 12; ++i) t[i] = static_cast<float>(i);
  Tensor<float> r = t.reshaped(Shape{3, 4});
  CHECK(r.shape() == Shape{3, 4});
  CHECK(r[7] == 7.0f);
  CHECK_THROWS(t.reshaped(Shape{5, 2}));
}

TEST_CASE("eigen views alias the same storage") {
  Tensor<float> t(Shape{2, 3});
  t.mat(2, 3).setConstant(2.0f);
  CHECK(t[5] == 2.0f);
  t.arr() += 1.0f;
  CHECK(t[0] == 3.0f);
  CHECK_THROWS(t.mat(4, 2));
}

TEST_CASE("cast converts scalar type") {
  Tensor<float> t(Shape{3}, 1.25f);
  auto d = t.cast<double>();
  CHECK(d[1] == doctest::Approx(1.25));
  auto b = Tensor<double>(Shape{2}, 3.7).cast<std::uint8_t>();
  CHECK(b[0] == 3);
}
