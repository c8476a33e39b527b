#include <filesystem>

#include "doctest.h"
#include "ulfe/core/archive.hpp"
#include "ulfe/core/rng.hpp"
#include "ulfe/core/sha256.hpp"

using namespace ulfe;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / "ulfe_test_archive";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("archive round-trips tensors, dtypes, and meta") {
  Rng rng(51);
  Tensor<float> a(Shape{2, 3, 4});
  for (index_t i = 0; i < a.numel(); ++i) a[i] = static_cast<float>(rng.normal());
  Tensor<double> b(Shape{5});
  for (index_t i = 0; i < b.numel(); ++i) b[i] = rng.uniform();
  Tensor<std::uint8_t> c(Shape{3, 3});
  for (index_t i = 0; i < c.numel(); ++i) c[i] = static_cast<std::uint8_t>(i);

  ArchiveWriter w;
  w.meta()["epoch"] = 7;
  w.meta()["best"] = 0.25;
  w.add("net/w", a);
  w.add("net/b", b);
  w.add("mask", c);
  const auto path = (temp_dir() / "roundtrip.ulfe").string();
  w.save(path);

  Archive r = Archive::load(path);
  CHECK(r.meta().at("epoch").get<int>() == 7);
  CHECK(r.meta().at("best").get<double>() == 0.25);
  CHECK(r.has("net/w"));
  CHECK_FALSE(r.has("nope"));
  auto a2 = r.get<float>("net/w");
  REQUIRE(a2.shape() == a.shape());
  for (index_t i = 0; i < a.numel(); ++i) CHECK(a2[i] == a[i]);  // bit-exact
  auto b2 = r.get<double>("net/b");
  for (index_t i = 0; i < b.numel(); ++i) CHECK(b2[i] == b[i]);
  auto c2 = r.get<std::uint8_t>("mask");
  CHECK(c2[8] == 8);
  CHECK_THROWS(r.get<float>("net/b"));  // dtype mismatch is an error, not a cast
  CHECK_THROWS(r.get<float>("missing"));
}

TEST_CASE("archive rejects duplicates and corrupt files") {
  ArchiveWriter w;
  w.add("x", Tensor<float>(Shape{1}, 1.0f));
  CHECK_THROWS(w.add("x", Tensor<float>(Shape{1}, 2.0f)));

  const auto dir = temp_dir();
  const auto bad = (dir / "bad.ulfe").string();
  {
    std::ofstream f(bad, std::ios::binary);
    f << "not an archive at all";
  }
  CHECK_THROWS(Archive::load(bad));
  CHECK_THROWS(Archive::load((dir / "does_not_exist.ulfe").string()));
}

TEST_CASE("identical content yields identical bytes and hash") {
  auto build = [] {
    ArchiveWriter w;
    w.meta()["tag"] = "frozen";
    Tensor<float> t(Shape{4, 4});
    for (index_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i) * 0.5f;
    w.add("w", t);
    return w.bytes();
  };
  const auto b1 = build(), b2 = build();
  CHECK(b1 == b2);
  CHECK(sha256_hex(b1) == sha256_hex(b2));
  CHECK(sha256_hex(b1).size() == 64);
}

TEST_CASE("sha256 file digest matches buffer digest") {
  const auto dir = temp_dir();
  const auto path = (dir / "digest.bin").string();
  std::vector<unsigned char> payload;
  for (int i = 0; i < 1000; ++i) payload.push_back(static_cast<unsigned char>(i * 7));
  {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  }
  CHECK(sha256_file(path) == sha256_hex(payload));
  // pinned vector: sha256 of the empty string
  CHECK(sha256_hex(nullptr, 0) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
