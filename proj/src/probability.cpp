#include "sslseg/probability.hpp"

#include <algorithm>
#include <cmath>

#include "sslseg/error.hpp"

namespace sslseg {

Tensor image_to_tensor(const data::CompositeImage& image) {
  const data::CompositeImage* one[] = {&image};
  return images_to_tensor(one);
}

Tensor images_to_tensor(std::span<const data::CompositeImage* const> images) {
  if (images.empty()) return {};
  const int h = images.front()->height, w = images.front()->width;
  Tensor t(static_cast<int>(images.size()), 3, h, w);
  for (std::size_t s = 0; s < images.size(); ++s) {
    if (images[s]->height != h || images[s]->width != w)
      throw ShapeError("images_to_tensor: images in one batch must share a size");
    std::copy(images[s]->rgb.begin(), images[s]->rgb.end(), t.sample(static_cast<int>(s)));
  }
  return t;
}

ProbabilityMap softmax_map(const Tensor& logits, int s) {
  if (logits.c() != 2) throw ShapeError("softmax_map expects 2-class logits, got " + logits.shape_string());
  ProbabilityMap m{logits.h(), logits.w(), {}};
  const std::size_t n = m.pixels();
  m.probs.resize(2 * n);
  const float* z0 = logits.plane(s, 0);
  const float* z1 = logits.plane(s, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(z1[i]) - static_cast<double>(z0[i]);
    m.probs[i] = 1.0 / (1.0 + std::exp(d));
    m.probs[n + i] = 1.0 / (1.0 + std::exp(-d));
  }
  return m;
}

void check_simplex(const ProbabilityMap& map, double tol) {
  const std::size_t n = map.pixels();
  if (map.probs.size() != 2 * n) throw ShapeError("probability map size does not match its shape");
  for (std::size_t i = 0; i < n; ++i) {
    const double a = map.probs[i], b = map.probs[n + i];
    if (!(a >= -tol && b >= -tol && std::abs(a + b - 1.0) <= tol))
      throw ValidationError("probability map is not a per-pixel distribution at pixel " + std::to_string(i));
  }
}

}  // namespace sslseg
