#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "sslseg/error.hpp"

namespace sslseg {

/// Symmetries of the square. Rotations are counter-clockwise.
enum class D4Element : int {
  Identity = 0,
  Rot90,
  Rot180,
  Rot270,
  FlipHorizontal,  // mirror left-right
  FlipVertical,    // mirror up-down
  Transpose,
  AntiTranspose,
};

inline constexpr std::array<D4Element, 8> kD4Elements{
    D4Element::Identity,       D4Element::Rot90,        D4Element::Rot180,
    D4Element::Rot270,         D4Element::FlipHorizontal, D4Element::FlipVertical,
    D4Element::Transpose,      D4Element::AntiTranspose};

std::string_view to_string(D4Element g);

/// Orthogonal 2x2 integer matrix acting on centred (row, col) coordinates.
struct D4Matrix {
  int a, b, c, d;  // [[a, b], [c, d]]
};

D4Matrix d4_matrix(D4Element g) noexcept;
D4Element d4_from_matrix(const D4Matrix& m);

/// apply(d4_compose(f, g), x) == apply(f, apply(g, x)).
D4Element d4_compose(D4Element f, D4Element g);
D4Element d4_inverse(D4Element g);

/// True when g maps a non-square grid onto itself.
constexpr bool d4_preserves_rectangles(D4Element g) noexcept {
  return g == D4Element::Identity || g == D4Element::Rot180 || g == D4Element::FlipHorizontal ||
         g == D4Element::FlipVertical;
}

/// Exact pixel permutation of `channels` planar (height, width) planes.
/// Square-only elements on a non-square grid raise ShapeError.
template <class T>
std::vector<T> d4_apply(D4Element g, std::span<const T> planes, int channels, int height, int width) {
  if (static_cast<std::size_t>(channels) * height * width != planes.size())
    throw ShapeError("d4_apply: buffer size does not match channels*height*width");
  if (height != width && !d4_preserves_rectangles(g))
    throw ShapeError("d4_apply: element requires a square grid");
  const D4Matrix m = d4_matrix(g);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<T> out(planes.size());
  // Doubled centred coordinates keep the map integral for even sizes.
  for (int i = 0; i < height; ++i) {
    const int u = 2 * i - (height - 1);
    for (int j = 0; j < width; ++j) {
      const int v = 2 * j - (width - 1);
      // source = M^T * (u, v) since M is orthogonal
      const int su = m.a * u + m.c * v;
      const int sv = m.b * u + m.d * v;
      const int si = (su + (height - 1)) / 2;
      const int sj = (sv + (width - 1)) / 2;
      const std::size_t dst = static_cast<std::size_t>(i) * width + j;
      const std::size_t src = static_cast<std::size_t>(si) * width + sj;
      for (int c = 0; c < channels; ++c) out[c * plane + dst] = planes[c * plane + src];
    }
  }
  return out;
}

template <class T>
std::vector<T> d4_apply(D4Element g, const std::vector<T>& planes, int channels, int height, int width) {
  return d4_apply<T>(g, std::span<const T>(planes), channels, height, width);
}

}  // namespace sslseg
