#include <cmath>
#include <set>

#include "doctest.h"
#include "ulfe/core/rng.hpp"

using namespace ulfe;

TEST_CASE("same seed, same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
}

TEST_CASE("derive_seed separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t e = 0; e < 50; ++e)
    for (std::uint64_t i = 0; i < 4; ++i) seen.insert(derive_seed(7, e, i));
  CHECK(seen.size() == 200);
  CHECK(derive_seed(7, 1, 2) != derive_seed(7, 2, 1));
}

TEST_CASE("uniform stays in [0,1) and has sane mean") {
  Rng r(1);
  double acc = 0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    acc += u;
  }
  CHECK(std::fabs(acc / 20000 - 0.5) < 0.01);
}

TEST_CASE("normal moments match N(0,1)") {
  Rng r(3);
  double m = 0, v = 0;
  const int n = 40000;
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = r.normal();
    m += xs[i];
  }
  m /= n;
  for (int i = 0; i < n; ++i) v += (xs[i] - m) * (xs[i] - m);
  v /= n;
  CHECK(std::fabs(m) < 0.02);
  CHECK(std::fabs(v - 1.0) < 0.05);
}

TEST_CASE("uniform_int covers all residues") {
  Rng r(9);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(r.uniform_int(7));
  CHECK(seen.size() == 7);
  for (auto s : seen) CHECK(s < 7);
}

TEST_CASE("shuffle is a permutation and deterministic") {
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> w = v;
  Rng a(5), b(5);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::multiset<int> ms(v.begin(), v.end());
  CHECK(ms == std::multiset<int>({1, 2, 3, 4, 5, 6, 7, 8}));
}
