#pragma once

#include <span>
#include <vector>

#include "sslseg/core_data.hpp"
#include "sslseg/tensor.hpp"

namespace sslseg {

/// Per-pixel 2-class distribution, planar (2, height, width): plane 0 is
/// "not flooded", plane 1 is "flooded".
struct ProbabilityMap {
  int height = 0;
  int width = 0;
  std::vector<double> probs;

  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
  double background(std::size_t i) const noexcept { return probs[i]; }
  double flooded(std::size_t i) const noexcept { return probs[pixels() + i]; }
};

Tensor image_to_tensor(const data::CompositeImage& image);
Tensor images_to_tensor(std::span<const data::CompositeImage* const> images);

/// Numerically stable 2-class softmax of sample `s` of a (b, 2, h, w) tensor.
ProbabilityMap softmax_map(const Tensor& logits, int s);

/// Throws ValidationError unless every pixel is a distribution within `tol`.
void check_simplex(const ProbabilityMap& map, double tol = 1e-6);

}  // namespace sslseg
