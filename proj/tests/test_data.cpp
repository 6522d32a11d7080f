#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ciscnet/data.hpp"
#include "oracles.hpp"

using namespace ciscnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("ciscnet_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("empty manifest loads to empty list") {
  fs::path dir = temp_dir("empty");
  save_dataset({}, dir);
  CHECK(load_dataset(dir).empty());
}

TEST_CASE("missing manifest") {
  fs::path dir = temp_dir("missing");
  CHECK_THROWS_AS(load_dataset(dir / "nowhere"), MissingFile);
}

TEST_CASE("instance spanning two classes is rejected with its label") {
  LabeledPatch p(32, 32);
  p.inst(4, 4) = 3;
  p.cls(4, 4) = 1;
  p.inst(4, 5) = 3;
  p.cls(4, 5) = 2;
  try {
    validate_patch(p);
    FAIL("expected InconsistentLabels");
  } catch (const InconsistentLabels& e) {
    CHECK(e.label == 3);
  }
}

TEST_CASE("foreground agreement is enforced") {
  LabeledPatch p(32, 32);
  p.inst(2, 2) = 1;  // instance without class
  CHECK_THROWS_AS(validate_patch(p), InconsistentLabels);
  LabeledPatch q(32, 32);
  q.cls(2, 2) = 4;  // class without instance
  CHECK_THROWS_AS(validate_patch(q), InconsistentLabels);
}

TEST_CASE("save then load round-trips bit-exactly") {
  SyntheticConfig cfg;
  cfg.seed = 11;
  cfg.n_patches = 3;
  cfg.height = 48;
  cfg.width = 64;
  cfg.density = 0.15;
  std::vector<LabeledPatch> patches = generate_synthetic(cfg);
  fs::path dir = temp_dir("roundtrip");
  save_dataset(patches, dir, cfg.seed);
  std::vector<LabeledPatch> loaded = load_dataset(dir);
  REQUIRE(loaded.size() == patches.size());
  for (size_t i = 0; i < patches.size(); ++i) {
    CHECK(loaded[i].image == patches[i].image);
    CHECK(loaded[i].instances == patches[i].instances);
    CHECK(loaded[i].classes == patches[i].classes);
  }
}

TEST_CASE("save twice produces byte-identical directories") {
  SyntheticConfig cfg;
  cfg.seed = 5;
  cfg.n_patches = 2;
  cfg.height = 32;
  cfg.width = 32;
  std::vector<LabeledPatch> patches = generate_synthetic(cfg);
  fs::path a = temp_dir("bytes_a"), b = temp_dir("bytes_b");
  save_dataset(patches, a, cfg.seed);
  save_dataset(patches, b, cfg.seed);
  for (const auto& entry : fs::directory_iterator(a)) {
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(b / entry.path().filename(), std::ios::binary);
    REQUIRE(fb.good());
    std::string ca((std::istreambuf_iterator<char>(fa)), {});
    std::string cb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ca == cb);
  }
}

TEST_CASE("save to unwritable path reports IoFailure") {
  std::vector<LabeledPatch> patches = {LabeledPatch(32, 32)};
  CHECK_THROWS_AS(save_dataset(patches, "/proc/zero/nope"), IoFailure);
}

TEST_CASE("heterogeneous dimensions are rejected") {
  std::vector<LabeledPatch> patches = {LabeledPatch(32, 32), LabeledPatch(32, 48)};
  CHECK_THROWS_AS(save_dataset(patches, temp_dir("hetero")), HeterogeneousDimensions);
}

TEST_CASE("generator determinism and density->0 limit") {
  SyntheticConfig cfg;
  cfg.seed = 7;
  cfg.n_patches = 2;
  cfg.height = 64;
  cfg.width = 64;
  cfg.density = 0.2;
  auto a = generate_synthetic(cfg);
  auto b = generate_synthetic(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].instances == b[i].instances);
    CHECK(a[i].classes == b[i].classes);
  }

  cfg.density = 1e-9;
  auto empty = generate_synthetic(cfg);
  for (const auto& p : empty) {
    for (uint16_t l : p.instances) CHECK(l == 0);
  }
}

TEST_CASE("generator bookkeeping matches a brute-force recount") {
  SyntheticConfig cfg;
  cfg.seed = 7;
  cfg.n_patches = 10;
  cfg.height = 64;
  cfg.width = 64;
  cfg.density = 0.2;
  std::vector<CountVector> recorded;
  std::vector<LabeledPatch> patches = generate_synthetic(cfg, &recorded);
  REQUIRE(recorded.size() == patches.size());
  for (size_t i = 0; i < patches.size(); ++i) {
    CountVector scanned = oracles::recount_by_scan(patches[i]);
    CHECK(scanned == recorded[i]);
    CHECK(scanned == count_ground_truth(patches[i]));
    CHECK(scanned.total() == recorded[i].total());
  }
}

TEST_CASE("generator rejects bad parameters") {
  SyntheticConfig cfg;
  cfg.height = 16;  // too small
  CHECK_THROWS_AS(generate_synthetic(cfg), DimensionTooSmall);
  cfg.height = 64;
  cfg.width = 64;
  cfg.class_weights = {0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(generate_synthetic(cfg), InvalidWeights);
  cfg.class_weights = {1, 1, 1, 1, 1, -1};
  CHECK_THROWS_AS(generate_synthetic(cfg), InvalidWeights);
}

TEST_CASE("count_ground_truth basics") {
  LabeledPatch p(32, 32);
  CountVector zero = count_ground_truth(p);
  for (int c : zero.counts) CHECK(c == 0);

  p.inst(3, 3) = 1;
  p.cls(3, 3) = 2;
  CountVector one = count_ground_truth(p);
  CHECK(one.counts == std::array<int, 6>{0, 1, 0, 0, 0, 0});
}

TEST_CASE("touching mode allows adjacency but never overlap") {
  SyntheticConfig cfg;
  cfg.seed = 13;
  cfg.n_patches = 4;
  cfg.height = 64;
  cfg.width = 64;
  cfg.density = 0.35;
  cfg.touching = true;
  std::vector<LabeledPatch> patches = generate_synthetic(cfg);
  for (const auto& p : patches) validate_patch(p);  // one class per instance still holds
}
