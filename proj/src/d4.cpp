#include "sslseg/d4.hpp"

namespace sslseg {

std::string_view to_string(D4Element g) {
  switch (g) {
    case D4Element::Identity: return "identity";
    case D4Element::Rot90: return "rot90";
    case D4Element::Rot180: return "rot180";
    case D4Element::Rot270: return "rot270";
    case D4Element::FlipHorizontal: return "flip-horizontal";
    case D4Element::FlipVertical: return "flip-vertical";
    case D4Element::Transpose: return "transpose";
    case D4Element::AntiTranspose: return "anti-transpose";
  }
  return "?";
}

// out(p) = in(M^T p); e.g. rot90 gives out[i][j] = in[j][n-1-i].
D4Matrix d4_matrix(D4Element g) noexcept {
  switch (g) {
    case D4Element::Identity: return {1, 0, 0, 1};
    case D4Element::Rot90: return {0, -1, 1, 0};
    case D4Element::Rot180: return {-1, 0, 0, -1};
    case D4Element::Rot270: return {0, 1, -1, 0};
    case D4Element::FlipHorizontal: return {1, 0, 0, -1};
    case D4Element::FlipVertical: return {-1, 0, 0, 1};
    case D4Element::Transpose: return {0, 1, 1, 0};
    case D4Element::AntiTranspose: return {0, -1, -1, 0};
  }
  return {1, 0, 0, 1};
}

D4Element d4_from_matrix(const D4Matrix& m) {
  for (auto g : kD4Elements) {
    const auto e = d4_matrix(g);
    if (e.a == m.a && e.b == m.b && e.c == m.c && e.d == m.d) return g;
  }
  throw ValidationError("matrix is not an element of D4");
}

D4Element d4_compose(D4Element f, D4Element g) {
  const auto F = d4_matrix(f);
  const auto G = d4_matrix(g);
  return d4_from_matrix({F.a * G.a + F.b * G.c, F.a * G.b + F.b * G.d, F.c * G.a + F.d * G.c,
                         F.c * G.b + F.d * G.d});
}

D4Element d4_inverse(D4Element g) {
  const auto m = d4_matrix(g);
  return d4_from_matrix({m.a, m.c, m.b, m.d});
}

}  // namespace sslseg
