#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "sslseg/core_data.hpp"
#include "sslseg/dataset_io.hpp"
#include "sslseg/error.hpp"

using namespace sslseg;
using namespace sslseg::data;

namespace {

TilePair make_tile(const std::string& id, int h, int w, float vv, float vh, std::size_t valid_count) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  TilePair t{id, h, w, std::vector<float>(n, vv), std::vector<float>(n, vh), std::vector<std::uint8_t>(n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    if (i < valid_count) {
      t.valid[i] = 1;
    } else {
      t.vv[i] = t.vh[i] = 0.0f;
    }
  }
  return t;
}

ExampleRef make_example(TilePair tile, bool flooded = false, ConfidenceTier tier = ConfidenceTier::High) {
  GroundTruthMask mask{tile.height, tile.width, std::vector<std::uint8_t>(tile.pixels(), 0)};
  if (flooded) mask.labels[0] = 1;
  auto img = compose_rgb(tile);
  return std::make_shared<LabeledExample>(std::move(tile), std::move(img), std::move(mask), tier, "r");
}

}  // namespace

TEST_CASE("compose_rgb: equal vv and vh under one scale give red == green and a constant blue") {
  CompositeNormalization norm;
  norm.vh_max = norm.vv_max;  // identical scaling for the two polarisations
  auto tile = make_tile("k", 4, 4, 0.2f, 0.2f, 16);
  const auto img = compose_rgb(tile, norm);
  const float blue0 = img.channel(2)[0];
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(img.channel(0)[i] == img.channel(1)[i]);
    CHECK(img.channel(2)[i] == blue0);
  }
  // ratio is 1 before normalisation
  CHECK(blue0 == doctest::Approx(1.0 / 20.0).epsilon(1e-5));
}

TEST_CASE("compose_rgb: all-invalid tile is all zero") {
  auto tile = make_tile("z", 5, 3, 0.0f, 0.0f, 0);
  const auto img = compose_rgb(tile);
  CHECK(std::all_of(img.rgb.begin(), img.rgb.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("compose_rgb: matches a per-pixel recomputation on random 8x8 input") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<float> u(0.0f, 0.6f);
  TilePair t{"r", 8, 8, std::vector<float>(64), std::vector<float>(64), std::vector<std::uint8_t>(64, 1)};
  for (int i = 0; i < 64; ++i) {
    t.vv[i] = u(rng);
    t.vh[i] = u(rng) * 0.3f;
  }
  t.valid[5] = 0;
  t.vv[5] = t.vh[5] = 0.0f;
  const auto img = compose_rgb(t);
  for (int i = 0; i < 64; ++i) {
    if (i == 5) {
      CHECK(img.channel(0)[i] == 0.0f);
      continue;
    }
    const double r = std::clamp(t.vv[i] / 0.5, 0.0, 1.0);
    const double g = std::clamp(t.vh[i] / 0.15, 0.0, 1.0);
    const double b = std::clamp(t.vv[i] / (t.vh[i] + 1e-6) / 20.0, 0.0, 1.0);
    CHECK(img.channel(0)[i] == doctest::Approx(r).epsilon(1e-5));
    CHECK(img.channel(1)[i] == doctest::Approx(g).epsilon(1e-5));
    CHECK(img.channel(2)[i] == doctest::Approx(b).epsilon(1e-5));
  }
}

TEST_CASE("compose_rgb: output stays in [0,1] for arbitrary non-negative input") {
  std::mt19937_64 rng(3);
  std::exponential_distribution<float> e(0.5f);
  for (int trial = 0; trial < 20; ++trial) {
    TilePair t{"p", 6, 7, std::vector<float>(42), std::vector<float>(42), std::vector<std::uint8_t>(42, 1)};
    for (int i = 0; i < 42; ++i) {
      t.vv[i] = e(rng);
      t.vh[i] = trial % 3 == 0 ? 0.0f : e(rng);
    }
    const auto img = compose_rgb(t);
    CHECK(img.rgb.size() == 3u * 42u);
    CHECK(std::all_of(img.rgb.begin(), img.rgb.end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
    CHECK(compose_rgb(t).rgb == img.rgb);
  }
}

TEST_CASE("compose_rgb: mismatched planes raise ShapeError") {
  auto tile = make_tile("bad", 4, 4, 0.1f, 0.1f, 16);
  tile.vh.pop_back();
  CHECK_THROWS_AS(compose_rgb(tile), ShapeError);
}

TEST_CASE("valid_fraction") {
  CHECK(valid_fraction(make_tile("a", 4, 4, 0.1f, 0.1f, 16)) == 1.0);
  CHECK(valid_fraction(make_tile("b", 4, 4, 0.1f, 0.1f, 0)) == 0.0);
  CHECK(valid_fraction(make_tile("c", 256, 256, 0.1f, 0.1f, 262)) == doctest::Approx(262.0 / 65536.0));
  CHECK(valid_fraction(make_tile("c", 256, 256, 0.1f, 0.1f, 262)) == doctest::Approx(0.003998).epsilon(1e-3));
}

TEST_CASE("filter_swath_gaps: strict threshold, idempotent, input untouched") {
  DatasetIndex index;
  index.add(make_example(make_tile("full", 10, 20, 0.1f, 0.05f, 200)));
  index.add(make_example(make_tile("exact", 10, 20, 0.1f, 0.05f, 1)));     // 1/200 == 0.005
  index.add(make_example(make_tile("below", 50, 50, 0.1f, 0.05f, 10)));    // 0.004
  index.add(make_example(make_tile("empty", 10, 10, 0.1f, 0.05f, 0)));
  const auto kept = filter_swath_gaps(index);
  CHECK(index.size() == 4);
  CHECK(kept.size() == 2);
  CHECK(kept.contains("full"));
  CHECK(kept.contains("exact"));
  CHECK_FALSE(kept.contains("below"));
  const auto twice = filter_swath_gaps(kept);
  REQUIRE(twice.size() == kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) CHECK(twice[i].id() == kept[i].id());
  CHECK_THROWS_AS(filter_swath_gaps(index, 1.5), ConfigError);
}

TEST_CASE("filter_swath_gaps: fully valid tiles keep identical membership") {
  DatasetIndex index;
  for (int k = 0; k < 5; ++k) index.add(make_example(make_tile("t" + std::to_string(k), 4, 4, 0.1f, 0.05f, 16)));
  const auto kept = filter_swath_gaps(index);
  REQUIRE(kept.size() == index.size());
  for (std::size_t i = 0; i < kept.size(); ++i) CHECK(kept[i].id() == index[i].id());
}

TEST_CASE("DatasetIndex rejects duplicate ids; flood flag follows the mask") {
  DatasetIndex index;
  index.add(make_example(make_tile("x", 4, 4, 0.1f, 0.05f, 16), true));
  CHECK_THROWS_AS(index.add(make_example(make_tile("x", 4, 4, 0.1f, 0.05f, 16))), ValidationError);
  CHECK(index[0].flood_present());
  CHECK(index.flood_present_count() == 1);
}

TEST_CASE("LabeledExample validates mask values and shapes") {
  auto tile = make_tile("m", 2, 2, 0.1f, 0.05f, 4);
  auto img = compose_rgb(tile);
  CHECK_THROWS_AS(LabeledExample(tile, img, GroundTruthMask{2, 2, {0, 2, 0, 0}}, ConfidenceTier::High, "r"),
                  ValidationError);
  CHECK_THROWS_AS(LabeledExample(tile, img, GroundTruthMask{2, 3, std::vector<std::uint8_t>(6)}, ConfidenceTier::High, "r"),
                  ShapeError);
}

TEST_CASE("generator: counts, determinism, invariants") {
  GeneratorSpec spec;
  spec.tile_size = 16;
  spec.tile_count = 100;
  spec.flood_proportion = 0.3;
  const auto a = generate_synthetic_dataset(spec, 5);
  const auto b = generate_synthetic_dataset(spec, 5);
  CHECK(a.flood_present_count() == 30);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id() == b[i].id());
    CHECK(a[i].tile().vv == b[i].tile().vv);
    CHECK(a[i].tile().vh == b[i].tile().vh);
    CHECK(a[i].tile().valid == b[i].tile().valid);
    CHECK(a[i].mask().labels == b[i].mask().labels);
    CHECK(a[i].flood_present() == a[i].mask().any_flooded());
    for (std::size_t p = 0; p < a[i].tile().pixels(); ++p) {
      if (!a[i].tile().valid[p]) {
        CHECK(a[i].tile().vv[p] == 0.0f);
        CHECK(a[i].mask().labels[p] == 0);
      }
      CHECK(std::isfinite(a[i].tile().vv[p]));
    }
  }
  spec.flood_proportion = 1.0;
  const auto all = generate_synthetic_dataset(spec, 9);
  CHECK(all.flood_present_count() == all.size());
  spec.tile_count = 0;
  CHECK_THROWS_AS(generate_synthetic_dataset(spec, 1), ConfigError);
  spec.tile_count = 4;
  spec.tile_size = -1;
  CHECK_THROWS_AS(generate_synthetic_dataset(spec, 1), ConfigError);
}

TEST_CASE("dataset round-trips through the on-disk layout") {
  const auto root = std::filesystem::temp_directory_path() / "sslseg_unit_dataset";
  std::filesystem::remove_all(root);
  GeneratorSpec spec;
  spec.tile_size = 8;
  spec.tile_count = 6;
  spec.swath_gap_rate = 0.5;
  Dataset ds;
  ds.train = generate_synthetic_dataset(spec, 1);
  spec.split = Split::Val;
  spec.id_prefix = "v";
  ds.val = generate_synthetic_dataset(spec, 2);
  save_dataset(root, ds);
  const auto back = load_dataset(root);
  REQUIRE(back.train.size() == ds.train.size());
  REQUIRE(back.val.size() == ds.val.size());
  CHECK(back.test.empty());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(back.train[i].id() == ds.train[i].id());
    CHECK(back.train[i].tile().vv == ds.train[i].tile().vv);
    CHECK(back.train[i].tile().valid == ds.train[i].tile().valid);
    CHECK(back.train[i].mask().labels == ds.train[i].mask().labels);
    CHECK(back.train[i].image().rgb == ds.train[i].image().rgb);
    CHECK(back.train[i].tier() == ds.train[i].tier());
  }

  // truncated array file
  const auto victim = root / ("vv_" + ds.train[0].id() + ".bin");
  std::filesystem::resize_file(victim, 20);
  CHECK_THROWS_AS(load_dataset(root), IoError);
  std::filesystem::remove_all(root);
}

TEST_CASE("mask PNG has the PNG signature") {
  const auto path = std::filesystem::temp_directory_path() / "sslseg_unit_mask.png";
  write_mask_png(path, GroundTruthMask{3, 4, {0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 0}});
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  const unsigned char expected[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  CHECK(std::equal(sig, sig + 8, expected));
  std::filesystem::remove(path);
}
