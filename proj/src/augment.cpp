#include "sslseg/augment.hpp"

#include <algorithm>
#include <cmath>

#include "sslseg/error.hpp"
#include "sslseg/random.hpp"

namespace sslseg::augment {

namespace {

std::vector<float> gaussian_blur(const std::vector<float>& src, int h, int w, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = static_cast<float>(std::exp(-0.5 * k * k / (sigma * sigma)));
    total += kernel[k + radius];
  }
  for (auto& k : kernel) k = static_cast<float>(k / total);
  std::vector<float> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * src[static_cast<std::size_t>(y) * w + std::clamp(x + k, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

void normalize_displacement(std::vector<float>& dx, std::vector<float>& dy, double alpha) {
  float peak = 0.0f;
  for (std::size_t i = 0; i < dx.size(); ++i) peak = std::max(peak, std::hypot(dx[i], dy[i]));
  const float s = peak > 0.0f ? static_cast<float>(alpha) / peak : 0.0f;
  for (auto& v : dx) v *= s;
  for (auto& v : dy) v *= s;
}

}  // namespace

GeometricTransform sample_transform(const AugmentSettings& settings, int height, int width,
                                    std::uint64_t seed) {
  auto rng = make_rng(seed, 0xA06);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GeometricTransform t;
  t.height = height;
  t.width = width;

  D4Element g = D4Element::Identity;
  if (unit(rng) < settings.flip_probability) g = D4Element::FlipHorizontal;
  if (unit(rng) < settings.rotate_probability) {
    const bool square = height == width;
    const int turns = square ? 1 + static_cast<int>(unit(rng) * 3.0) : 2;
    const D4Element rot = turns == 1 ? D4Element::Rot90 : turns == 2 ? D4Element::Rot180 : D4Element::Rot270;
    g = d4_compose(rot, g);
  }
  t.symmetry = g;

  if (unit(rng) < settings.elastic_probability && settings.elastic_alpha > 0.0) {
    t.elastic = true;
    const std::size_t n = static_cast<std::size_t>(height) * width;
    std::vector<float> rx(n), ry(n);
    for (std::size_t i = 0; i < n; ++i) {
      rx[i] = static_cast<float>(2.0 * unit(rng) - 1.0);
      ry[i] = static_cast<float>(2.0 * unit(rng) - 1.0);
    }
    t.dx = gaussian_blur(rx, height, width, settings.elastic_sigma);
    t.dy = gaussian_blur(ry, height, width, settings.elastic_sigma);
    normalize_displacement(t.dx, t.dy, settings.elastic_alpha);
  }
  return t;
}

std::vector<float> apply_bilinear(const GeometricTransform& t, std::span<const float> planes, int channels) {
  const int h = t.height, w = t.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (planes.size() != n * channels) throw ShapeError("apply_bilinear: plane size mismatch");
  std::vector<float> warped(planes.begin(), planes.end());
  if (t.elastic) {
    for (int c = 0; c < channels; ++c) {
      const float* src = planes.data() + c * n;
      float* dst = warped.data() + c * n;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          const float sy = std::clamp(static_cast<float>(y) + t.dy[i], 0.0f, static_cast<float>(h - 1));
          const float sx = std::clamp(static_cast<float>(x) + t.dx[i], 0.0f, static_cast<float>(w - 1));
          const int y0 = std::min(static_cast<int>(sy), h - 1), x0 = std::min(static_cast<int>(sx), w - 1);
          const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
          const float fy = sy - static_cast<float>(y0), fx = sx - static_cast<float>(x0);
          const float top = src[y0 * w + x0] * (1 - fx) + src[y0 * w + x1] * fx;
          const float bot = src[y1 * w + x0] * (1 - fx) + src[y1 * w + x1] * fx;
          dst[i] = top * (1 - fy) + bot * fy;
        }
    }
  }
  return d4_apply<float>(t.symmetry, warped, channels, h, w);
}

std::vector<std::uint8_t> apply_nearest(const GeometricTransform& t, std::span<const std::uint8_t> plane) {
  const int h = t.height, w = t.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (plane.size() != n) throw ShapeError("apply_nearest: plane size mismatch");
  std::vector<std::uint8_t> warped(plane.begin(), plane.end());
  if (t.elastic) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const int sy = std::clamp(static_cast<int>(std::lround(static_cast<float>(y) + t.dy[i])), 0, h - 1);
        const int sx = std::clamp(static_cast<int>(std::lround(static_cast<float>(x) + t.dx[i])), 0, w - 1);
        warped[i] = plane[static_cast<std::size_t>(sy) * w + sx];
      }
  }
  return d4_apply<std::uint8_t>(t.symmetry, warped, 1, h, w);
}

std::pair<data::CompositeImage, data::GroundTruthMask> train_augment(const data::CompositeImage& image,
                                                                     const data::GroundTruthMask& mask,
                                                                     const AugmentSettings& settings,
                                                                     std::uint64_t seed) {
  if (image.height != mask.height || image.width != mask.width)
    throw ShapeError("train_augment: image and mask shapes differ");
  const auto t = sample_transform(settings, image.height, image.width, seed);
  data::CompositeImage out_img{image.height, image.width, apply_bilinear(t, image.rgb, 3)};
  data::GroundTruthMask out_mask{mask.height, mask.width, apply_nearest(t, mask.labels)};
  return {std::move(out_img), std::move(out_mask)};
}

}  // namespace sslseg::augment
