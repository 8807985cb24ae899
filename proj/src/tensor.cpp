#include "sslseg/tensor.hpp"

#include <algorithm>

#include "sslseg/error.hpp"

namespace sslseg {

Tensor::Tensor(int n, int c, int h, int w, float fill) : shape_{n, c, h, w} {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("negative tensor dimension");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
  return "(" + std::to_string(shape_[0]) + ", " + std::to_string(shape_[1]) + ", " +
         std::to_string(shape_[2]) + ", " + std::to_string(shape_[3]) + ")";
}

}  // namespace sslseg
