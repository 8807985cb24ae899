#include <doctest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include "helpers.hpp"
#include "sslseg/crf.hpp"
#include "sslseg/error.hpp"

using namespace sslseg;
using namespace sslseg::crf;

namespace {

ProbabilityMap random_probs(int h, int w, std::uint64_t seed) {
  const auto u = testutil::random_doubles(static_cast<std::size_t>(h) * w, seed, 0.0, 1.0);
  ProbabilityMap m{h, w, std::vector<double>(2 * u.size())};
  for (std::size_t i = 0; i < u.size(); ++i) {
    m.probs[i] = 1.0 - u[i];
    m.probs[u.size() + i] = u[i];
  }
  return m;
}

double max_diff(const ProbabilityMap& a, const ProbabilityMap& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.probs.size(); ++i) d = std::max(d, std::abs(a.probs[i] - b.probs[i]));
  return d;
}

// Scalar mean-field round written from the update rule, independent of the library loops.
ProbabilityMap one_round(const ProbabilityMap& p, const data::CompositeImage& img, const CRFParams& prm) {
  const int h = p.height, w = p.width;
  const std::size_t n = p.pixels();
  const double sxy = prm.sigma_xy_for(h);
  ProbabilityMap q = p;
  for (int yi = 0; yi < h; ++yi)
    for (int xi = 0; xi < w; ++xi) {
      const std::size_t i = static_cast<std::size_t>(yi) * w + xi;
      double msg_bg = 0.0, msg_fl = 0.0;
      for (int yj = 0; yj < h; ++yj)
        for (int xj = 0; xj < w; ++xj) {
          const std::size_t j = static_cast<std::size_t>(yj) * w + xj;
          if (j == i) continue;
          const double d2 = (yi - yj) * (yi - yj) + (xi - xj) * (xi - xj);
          double c2 = 0.0;
          for (int c = 0; c < 3; ++c) c2 += std::pow(img.channel(c)[i] - img.channel(c)[j], 2);
          const double k = prm.smoothness_weight * std::exp(-d2 / (2 * prm.smoothness_sigma * prm.smoothness_sigma)) +
                           prm.appearance_weight * std::exp(-d2 / (2 * sxy * sxy) -
                                                            c2 / (2 * prm.appearance_sigma_rgb * prm.appearance_sigma_rgb));
          msg_bg += k * p.background(j);
          msg_fl += k * p.flooded(j);
        }
      // Potts: a label pays for the neighbours' mass on the other label
      const double bg = std::max(p.background(i), 1e-8) * std::exp(-msg_fl);
      const double fl = std::max(p.flooded(i), 1e-8) * std::exp(-msg_bg);
      q.probs[i] = bg / (bg + fl);
      q.probs[n + i] = fl / (bg + fl);
    }
  return q;
}

}  // namespace

TEST_CASE("crf: zero pairwise weights keep the unary argmax for any number of rounds") {
  CRFParams prm;
  prm.smoothness_weight = 0.0;
  prm.appearance_weight = 0.0;
  const auto p = random_probs(9, 11, 1);
  const auto img = testutil::random_image(9, 11, 2);
  for (int t : {1, 3, 10}) {
    prm.iterations = t;
    const auto out = crf_refine(p, img, prm);
    for (std::size_t i = 0; i < p.pixels(); ++i)
      CHECK(out.labels.labels[i] == (p.flooded(i) > p.background(i) ? 1 : 0));
  }
}

TEST_CASE("crf: zero rounds return the input") {
  CRFParams prm;
  prm.iterations = 0;
  const auto p = random_probs(6, 6, 3);
  const auto out = crf_refine(p, testutil::random_image(6, 6, 4), prm, "id");
  CHECK(out.q.probs == p.probs);
  CHECK(out.tile_id == "id");
}

TEST_CASE("crf: marginals stay normalised after every round") {
  CRFParams prm;
  prm.iterations = 6;
  const auto p = random_probs(12, 12, 5);
  int rounds = 0;
  crf_refine(p, testutil::random_image(12, 12, 6), prm, {}, [&](int round, const ProbabilityMap& q) {
    CHECK(round == rounds);
    ++rounds;
    for (std::size_t i = 0; i < q.pixels(); ++i) {
      CHECK(q.background(i) >= 0.0);
      CHECK(q.flooded(i) >= 0.0);
      CHECK(std::abs(q.background(i) + q.flooded(i) - 1.0) < 1e-6);
    }
  });
  CHECK(rounds == 6);
}

TEST_CASE("crf: one round on three pixels matches the hand computation") {
  // 1x3 row; flooded probabilities 0.8, 0.3, 0.6; colours differ per pixel.
  ProbabilityMap p{1, 3, {0.2, 0.7, 0.4, 0.8, 0.3, 0.6}};
  data::CompositeImage img{1, 3, {0.0f, 0.5f, 0.0f,    // r
                                  0.0f, 0.0f, 0.5f,    // g
                                  0.0f, 0.0f, 0.0f}};  // b
  CRFParams prm;
  prm.iterations = 1;
  prm.smoothness_weight = 1.0;
  prm.smoothness_sigma = 1.0;
  prm.appearance_weight = 2.0;
  prm.appearance_sigma_xy = 2.0;
  prm.appearance_sigma_rgb = 0.5;
  // |s|^2: (0,1) = 1, (0,2) = 4, (1,2) = 1.  |I|^2: (0,1) = 0.25, (0,2) = 0.25, (1,2) = 0.5.
  const double k01 = std::exp(-0.5) + 2.0 * std::exp(-1.0 / 8.0 - 0.25 / 0.5);
  const double k02 = std::exp(-2.0) + 2.0 * std::exp(-4.0 / 8.0 - 0.25 / 0.5);
  const double k12 = std::exp(-0.5) + 2.0 * std::exp(-1.0 / 8.0 - 0.5 / 0.5);
  // pixel 0 sees 1 and 2, pixel 1 sees 0 and 2, pixel 2 sees 0 and 1
  const double bg0 = 0.2 * std::exp(-(k01 * 0.3 + k02 * 0.6)), fl0 = 0.8 * std::exp(-(k01 * 0.7 + k02 * 0.4));
  const double bg1 = 0.7 * std::exp(-(k01 * 0.8 + k12 * 0.6)), fl1 = 0.3 * std::exp(-(k01 * 0.2 + k12 * 0.4));
  const double bg2 = 0.4 * std::exp(-(k02 * 0.8 + k12 * 0.3)), fl2 = 0.6 * std::exp(-(k02 * 0.2 + k12 * 0.7));
  const std::vector<double> want{bg0 / (bg0 + fl0), bg1 / (bg1 + fl1), bg2 / (bg2 + fl2),
                                 fl0 / (bg0 + fl0), fl1 / (bg1 + fl1), fl2 / (bg2 + fl2)};
  const auto got = crf_refine(p, img, prm);
  const auto ref = reference::crf_refine(p, img, prm);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::abs(got.q.probs[i] - want[i]) < 1e-8);
    CHECK(std::abs(ref.q.probs[i] - want[i]) < 1e-8);
  }
}

TEST_CASE("crf: a flipped interior pixel reverts to its neighbourhood under default parameters") {
  const int s = 16;
  auto p = testutil::constant_probs(s, s, 0.05);
  const std::size_t centre = 7 * s + 8;
  p.probs[centre] = 0.05;
  p.probs[s * s + centre] = 0.95;
  data::CompositeImage img{s, s, std::vector<float>(3 * s * s, 0.3f)};
  CRFParams prm;
  prm.iterations = 1;
  const auto first = crf_refine(p, img, prm);
  const auto oracle = one_round(p, img, prm);
  CHECK(max_diff(first.q, oracle) < 1e-8);
  CHECK(oracle.flooded(centre) < 0.5);
  CHECK(first.labels.labels[centre] == 0);
  prm.iterations = 5;
  const auto full = crf_refine(p, img, prm);
  CHECK(std::all_of(full.labels.labels.begin(), full.labels.labels.end(), [](std::uint8_t v) { return v == 0; }));
}

TEST_CASE("crf: cached and streaming kernels agree with the per-pair reference") {
  CRFParams prm;
  prm.iterations = 2;
  for (int s : {7, 20}) {
    const auto p = random_probs(s, s + 1, 10 + s);
    const auto img = testutil::random_image(s, s + 1, 20 + s);
    CHECK(max_diff(crf_refine(p, img, prm).q, reference::crf_refine(p, img, prm).q) < 1e-9);
  }
  // above the cache limit (4096 pixels) messages are streamed
  prm.iterations = 1;
  const auto p = random_probs(65, 65, 30);
  const auto img = testutil::random_image(65, 65, 31);
  CHECK(max_diff(crf_refine(p, img, prm).q, reference::crf_refine(p, img, prm).q) < 1e-9);
}

TEST_CASE("crf: input validation") {
  CRFParams prm;
  auto p = random_probs(4, 4, 1);
  const auto img = testutil::random_image(4, 4, 1);
  CHECK_THROWS_AS(crf_refine(p, testutil::random_image(4, 5, 1), prm), ShapeError);
  p.probs[0] += 0.1;
  CHECK_THROWS_AS(crf_refine(p, img, prm), ValidationError);
  prm.smoothness_sigma = 0.0;
  CHECK_THROWS_AS(crf_refine(random_probs(4, 4, 1), img, prm), ConfigError);
}

TEST_CASE("crf_refine_batch: order, ids, determinism across worker counts, errors") {
  std::vector<ProbabilityMap> probs;
  std::vector<data::CompositeImage> imgs;
  std::vector<std::string> ids;
  for (int t = 0; t < 20; ++t) {
    probs.push_back(random_probs(16, 16, 100 + t));
    imgs.push_back(testutil::random_image(16, 16, 200 + t));
    ids.push_back("tile" + std::to_string(t));
  }
  CRFParams prm;
  const auto one = crf_refine_batch(probs, imgs, prm, 1, ids);
  const auto eight = crf_refine_batch(probs, imgs, prm, 8, ids);
  REQUIRE(one.size() == 20);
  REQUIRE(eight.size() == 20);
  for (std::size_t t = 0; t < 20; ++t) {
    CHECK(one[t].tile_id == ids[t]);
    CHECK(eight[t].tile_id == ids[t]);
    CHECK(one[t].q.probs == eight[t].q.probs);
    CHECK(one[t].labels.labels == eight[t].labels.labels);
    CHECK(one[t].q.probs == crf_refine(probs[t], imgs[t], prm).q.probs);
  }
  CHECK(crf_refine_batch({}, {}, prm, 4).empty());
  CHECK_THROWS_AS(crf_refine_batch(std::span(probs).first(3), std::span(imgs).first(2), prm, 2), ValidationError);
  CHECK_THROWS_AS(crf_refine_batch(probs, imgs, prm, 2, std::span(ids).first(5)), ValidationError);
}

TEST_CASE("crf_refine_batch: parallel speed-up on multi-core hosts") {
  const unsigned cores = std::thread::hardware_concurrency();
  if (cores < 4) {
    MESSAGE("skipped: " << cores << " hardware thread(s); the speed-up needs at least 4");
    return;
  }
  std::vector<ProbabilityMap> probs;
  std::vector<data::CompositeImage> imgs;
  for (int t = 0; t < 32; ++t) {
    probs.push_back(random_probs(64, 64, 300 + t));
    imgs.push_back(testutil::random_image(64, 64, 400 + t));
  }
  CRFParams prm;
  auto time = [&](int workers) {
    const auto t0 = std::chrono::steady_clock::now();
    crf_refine_batch(probs, imgs, prm, workers);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const double serial = time(1);
  const double parallel = time(8);
  CHECK(parallel <= 0.6 * serial);
}
