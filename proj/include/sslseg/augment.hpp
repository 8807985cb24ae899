#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sslseg/core_data.hpp"
#include "sslseg/d4.hpp"

namespace sslseg::augment {

/// Geometric training augmentation. Elastic displacement is a smoothed
/// random field whose largest magnitude is `elastic_alpha` pixels.
struct AugmentSettings {
  double flip_probability = 0.5;
  double rotate_probability = 0.5;
  double elastic_probability = 0.25;
  double elastic_alpha = 2.0;
  double elastic_sigma = 6.0;
};

/// One sampled transform: an elastic warp (optional) followed by a D4 element.
struct GeometricTransform {
  D4Element symmetry = D4Element::Identity;
  bool elastic = false;
  int height = 0;
  int width = 0;
  std::vector<float> dx;  // column displacement per output pixel
  std::vector<float> dy;  // row displacement per output pixel
};

GeometricTransform sample_transform(const AugmentSettings& settings, int height, int width,
                                    std::uint64_t seed);

/// Bilinear resampling of `channels` planes (used for images and soft maps).
std::vector<float> apply_bilinear(const GeometricTransform& t, std::span<const float> planes, int channels);
/// Nearest-neighbour resampling; keeps label values exact.
std::vector<std::uint8_t> apply_nearest(const GeometricTransform& t, std::span<const std::uint8_t> plane);

/// Applies one identical random transform to image and mask.
std::pair<data::CompositeImage, data::GroundTruthMask> train_augment(const data::CompositeImage& image,
                                                                     const data::GroundTruthMask& mask,
                                                                     const AugmentSettings& settings,
                                                                     std::uint64_t seed);

}  // namespace sslseg::augment
