#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "sslseg/error.hpp"
#include "sslseg/pseudo_label.hpp"

using namespace sslseg;
using namespace sslseg::pseudo;

namespace {

// Brute-force reading of the filter: count pixels whose max class probability
// exceeds c with a double loop, then compare the count against p * h * w.
bool oracle_keep(const std::vector<double>& logits, int h, int w, double c, double p) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  long count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double a = logits[i], b = logits[n + i];
      const double m = std::max(a, b);
      const double top = 1.0 / (std::exp(a - m) + std::exp(b - m));
      if (top > c) ++count;
    }
  return static_cast<double>(count) > p * h * w;
}

Prediction with_confidence(const std::vector<double>& conf, int h, int w) {
  Prediction pr;
  pr.tile_id = "t";
  pr.height = h;
  pr.width = w;
  pr.confidence = conf;
  pr.probs.resize(2 * conf.size());
  for (std::size_t i = 0; i < conf.size(); ++i) {
    pr.probs[i] = 1.0 - conf[i];
    pr.probs[conf.size() + i] = conf[i];
  }
  return pr;
}

}  // namespace

TEST_CASE("pixel_confidence: worked values") {
  const std::vector<double> logits{0.0, 1.0, 10.0, 3.0, 0.0, 0.0, -10.0, 3.0};  // planar (2, 1, 4)
  const auto conf = pixel_confidence(logits, 1, 4);
  CHECK(conf[0] == 0.5);
  CHECK(conf[1] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
  CHECK(conf[1] == doctest::Approx(0.731059).epsilon(1e-5));
  CHECK(std::abs(conf[2] - 1.0) < 1e-6);
  CHECK(conf[3] == 0.5);

  auto bad = logits;
  bad[5] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pixel_confidence(bad, 1, 4), NumericError);
  CHECK_THROWS_AS(pixel_confidence(logits, 2, 4), ShapeError);
}

TEST_CASE("pixel_confidence stays in [0.5, 1] and probabilities sum to one") {
  const auto z = testutil::random_doubles(2 * 64, 3, -30.0, 30.0);
  const auto pr = prediction_from_logits("x", z, 8, 8);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(pr.confidence[i] >= 0.5);
    CHECK(pr.confidence[i] <= 1.0);
    CHECK(pr.probs[i] + pr.probs[64 + i] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("filter_decision: strict comparisons") {
  ConfidenceFilterConfig cfg;  // c = p = 0.9
  CHECK(filter_decision(with_confidence(std::vector<double>(100, 0.95), 10, 10), cfg).kept);

  std::vector<double> conf(100, 0.5);
  for (int i = 0; i < 90; ++i) conf[i] = 0.99;
  const auto at90 = filter_decision(with_confidence(conf, 10, 10), cfg);
  CHECK(at90.confident_pixel_count == 90);
  CHECK(at90.required_count == doctest::Approx(90.0));
  CHECK_FALSE(at90.kept);
  conf[90] = 0.99;
  CHECK(filter_decision(with_confidence(conf, 10, 10), cfg).kept);

  // a pixel exactly at c is not confident
  CHECK_FALSE(filter_decision(with_confidence(std::vector<double>(100, 0.9), 10, 10), cfg).kept);
}

TEST_CASE("filter_decision: invalid pixels leave both the count and the area") {
  ConfidenceFilterConfig cfg;
  std::vector<double> conf(100, 0.99);
  for (int i = 0; i < 50; ++i) conf[i] = 0.6;
  auto pr = with_confidence(conf, 10, 10);
  CHECK_FALSE(filter_decision(pr, cfg).kept);
  pr.valid.assign(100, 1);
  for (int i = 0; i < 50; ++i) pr.valid[i] = 0;
  const auto d = filter_decision(pr, cfg);
  CHECK(d.kept);
  CHECK(d.confident_pixel_count == 50);
  CHECK(d.required_count == doctest::Approx(45.0));
  pr.valid.pop_back();
  CHECK_THROWS_AS(filter_decision(pr, cfg), ShapeError);
  cfg.confidence = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("filter_decision equals the brute-force oracle over 1000 random tiles and a threshold grid") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> spread(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.5, 8.0);
  std::size_t mismatches = 0, kept = 0, total = 0;
  for (int tile = 0; tile < 1000; ++tile) {
    const double s = scale(rng);
    std::vector<double> z(128);
    for (auto& v : z) v = s * spread(rng);
    const auto pr = prediction_from_logits("r", z, 8, 8);
    for (double c : {0.5, 0.7, 0.9, 0.99})
      for (double p : {0.5, 0.7, 0.9, 0.99}) {
        const bool got = filter_decision(pr, {c, p}).kept;
        mismatches += got != oracle_keep(z, 8, 8, c, p) ? 1 : 0;
        kept += got ? 1 : 0;
        ++total;
      }
  }
  CHECK(mismatches == 0);
  // the grid must exercise both outcomes
  CHECK(kept > 0);
  CHECK(kept < total);
}

TEST_CASE("filter_decision is monotone in c and p") {
  std::mt19937_64 rng(77);
  const std::vector<double> grid{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
  for (int tile = 0; tile < 200; ++tile) {
    const auto z = testutil::random_doubles(128, rng(), -6.0, 6.0);
    const auto pr = prediction_from_logits("m", z, 8, 8);
    for (std::size_t a = 0; a + 1 < grid.size(); ++a)
      for (std::size_t b = 0; b < grid.size(); ++b) {
        const double c = grid[a], p = grid[b], higher = grid[a + 1];
        if (!filter_decision(pr, {c, p}).kept) CHECK_FALSE(filter_decision(pr, {higher, p}).kept);
        if (!filter_decision(pr, {p, c}).kept) CHECK_FALSE(filter_decision(pr, {p, higher}).kept);
      }
  }
}

TEST_CASE("hard_labels: argmax with ties to not-flooded") {
  auto pr = with_confidence(std::vector<double>(4, 0.1), 2, 2);
  CHECK(hard_labels(pr).labels == std::vector<std::uint8_t>{0, 0, 0, 0});
  pr = with_confidence(std::vector<double>(4, 0.9), 2, 2);
  CHECK(hard_labels(pr).labels == std::vector<std::uint8_t>{1, 1, 1, 1});
  pr.probs[2] = pr.probs[6] = 0.5;
  CHECK(hard_labels(pr).labels == std::vector<std::uint8_t>{1, 1, 0, 1});
  const auto from_map = prediction_from_probabilities("q", testutil::constant_probs(3, 3, 0.8));
  CHECK(from_map.confidence[4] == doctest::Approx(0.8));
  CHECK(hard_labels(from_map).labels == std::vector<std::uint8_t>(9, 1));
}

TEST_CASE("assimilate: counts, tiers, replacement and collisions") {
  const auto train = testutil::imbalanced_index(30, 70);
  std::vector<PseudoLabel> kept;
  for (int i = 0; i < 40; ++i) {
    auto src = testutil::labeled_example("pool" + std::to_string(i), 4, false, 500 + i,
                                         data::ConfidenceTier::Low);
    data::GroundTruthMask m{4, 4, std::vector<std::uint8_t>(16, 0)};
    if (i % 4 == 0) m.labels[3] = 1;  // source mask stays empty; the pseudo mask decides
    kept.push_back({src, m});
  }
  const auto out = assimilate(train, kept);
  REQUIRE(out.size() == 140);
  std::size_t low = 0, low_flooded = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].tier() == data::ConfidenceTier::Low) {
      ++low;
      low_flooded += out[i].flood_present() ? 1 : 0;
    }
  }
  CHECK(low == 40);
  CHECK(low_flooded == 10);
  for (std::size_t i = 0; i < train.size(); ++i) {
    REQUIRE(out.contains(train[i].id()));
    CHECK(out.examples()[i].get() == train.examples()[i].get());
  }

  CHECK(assimilate(train, {}).size() == train.size());

  const std::vector<PseudoLabel> second(kept.begin() + 30, kept.end());
  const auto again = assimilate(out, second);
  CHECK(again.size() == 110);
  CHECK_FALSE(again.contains("pool0"));
  CHECK(again.contains("pool35"));

  std::vector<PseudoLabel> clash{{testutil::labeled_example("t5", 4, false, 1), {4, 4, std::vector<std::uint8_t>(16)}}};
  CHECK_THROWS_AS(assimilate(train, clash), AssimilationError);
}
