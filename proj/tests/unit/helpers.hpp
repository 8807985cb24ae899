#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sslseg/core_data.hpp"
#include "sslseg/probability.hpp"
#include "sslseg/tensor.hpp"

namespace testutil {

inline sslseg::Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, float scale = 1.0f) {
  sslseg::Tensor t(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-scale, scale);
  for (auto& v : t.span()) v = u(rng);
  return t;
}

inline std::vector<double> random_doubles(std::size_t n, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline sslseg::data::CompositeImage random_image(int h, int w, std::uint64_t seed) {
  sslseg::data::CompositeImage img{h, w, std::vector<float>(3 * static_cast<std::size_t>(h) * w)};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img.rgb) v = u(rng);
  return img;
}

inline sslseg::ProbabilityMap constant_probs(int h, int w, double p_flooded) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  sslseg::ProbabilityMap m{h, w, std::vector<double>(2 * n)};
  for (std::size_t i = 0; i < n; ++i) {
    m.probs[i] = 1.0 - p_flooded;
    m.probs[n + i] = p_flooded;
  }
  return m;
}

/// HIGH-tier example with a random image; flooded tiles get one flooded pixel.
inline sslseg::data::ExampleRef labeled_example(const std::string& id, int size, bool flooded, std::uint64_t seed,
                                                sslseg::data::ConfidenceTier tier = sslseg::data::ConfidenceTier::High) {
  using namespace sslseg::data;
  const std::size_t n = static_cast<std::size_t>(size) * size;
  TilePair tile{id, size, size, std::vector<float>(n, 0.1f), std::vector<float>(n, 0.02f), std::vector<std::uint8_t>(n, 1)};
  GroundTruthMask mask{size, size, std::vector<std::uint8_t>(n, 0)};
  if (flooded) mask.labels[n / 2] = 1;
  return std::make_shared<LabeledExample>(std::move(tile), random_image(size, size, seed), std::move(mask), tier, "r");
}

/// `flooded` flood-present tiles followed by `dry` empty ones.
inline sslseg::data::DatasetIndex imbalanced_index(std::size_t flooded, std::size_t dry, int size = 4) {
  sslseg::data::DatasetIndex index;
  for (std::size_t i = 0; i < flooded + dry; ++i)
    index.add(labeled_example("t" + std::to_string(i), size, i < flooded, i));
  return index;
}

}  // namespace testutil
