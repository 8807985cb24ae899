#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "sslseg/augment.hpp"
#include "sslseg/d4.hpp"
#include "sslseg/error.hpp"

using namespace sslseg;

namespace {

std::vector<int> grid(int h, int w) {
  std::vector<int> v(static_cast<std::size_t>(h) * w);
  std::iota(v.begin(), v.end(), 1);
  return v;
}

}  // namespace

TEST_CASE("d4_apply on a 3x3 grid matches hand enumeration") {
  // 1 2 3 / 4 5 6 / 7 8 9, rotations counter-clockwise
  const auto x = grid(3, 3);
  const std::vector<std::pair<D4Element, std::vector<int>>> expected{
      {D4Element::Identity, {1, 2, 3, 4, 5, 6, 7, 8, 9}},
      {D4Element::Rot90, {3, 6, 9, 2, 5, 8, 1, 4, 7}},
      {D4Element::Rot180, {9, 8, 7, 6, 5, 4, 3, 2, 1}},
      {D4Element::Rot270, {7, 4, 1, 8, 5, 2, 9, 6, 3}},
      {D4Element::FlipHorizontal, {3, 2, 1, 6, 5, 4, 9, 8, 7}},
      {D4Element::FlipVertical, {7, 8, 9, 4, 5, 6, 1, 2, 3}},
      {D4Element::Transpose, {1, 4, 7, 2, 5, 8, 3, 6, 9}},
      {D4Element::AntiTranspose, {9, 6, 3, 8, 5, 2, 7, 4, 1}},
  };
  for (const auto& [g, want] : expected) {
    CAPTURE(to_string(g));
    CHECK(d4_apply(g, x, 1, 3, 3) == want);
  }
}

TEST_CASE("d4: all 64 compositions close and act as composed maps") {
  const auto x = grid(6, 6);  // even size exercises the half-pixel centre
  std::set<int> distinct;
  for (auto f : kD4Elements) {
    distinct.insert(static_cast<int>(f));
    for (auto g : kD4Elements) {
      const auto fg = d4_compose(f, g);
      CHECK(std::find(kD4Elements.begin(), kD4Elements.end(), fg) != kD4Elements.end());
      CHECK(d4_apply(fg, x, 1, 6, 6) == d4_apply(f, d4_apply(g, x, 1, 6, 6), 1, 6, 6));
    }
    CHECK(d4_compose(f, d4_inverse(f)) == D4Element::Identity);
    CHECK(d4_compose(d4_inverse(f), f) == D4Element::Identity);
    CHECK(d4_from_matrix(d4_matrix(f)) == f);
  }
  CHECK(distinct.size() == 8);
  // the 8 images of an asymmetric grid are pairwise different
  std::set<std::vector<int>> images;
  for (auto g : kD4Elements) images.insert(d4_apply(g, x, 1, 6, 6));
  CHECK(images.size() == 8);
}

TEST_CASE("d4_apply keeps channels aligned and rejects square-only elements on rectangles") {
  std::vector<float> planes(2 * 12);
  for (std::size_t i = 0; i < 12; ++i) {
    planes[i] = static_cast<float>(i);
    planes[12 + i] = static_cast<float>(100 + i);
  }
  for (auto g : kD4Elements) {
    if (!d4_preserves_rectangles(g)) {
      CHECK_THROWS_AS(d4_apply(g, planes, 2, 3, 4), ShapeError);
      continue;
    }
    const auto out = d4_apply(g, planes, 2, 3, 4);
    for (std::size_t i = 0; i < 12; ++i) CHECK(out[12 + i] == out[i] + 100.0f);
  }
  CHECK_THROWS_AS(d4_apply(D4Element::Identity, planes, 3, 3, 4), ShapeError);
}

TEST_CASE("augment: zero probabilities give the identity") {
  augment::AugmentSettings off{0.0, 0.0, 0.0, 2.0, 6.0};
  const auto img = testutil::random_image(8, 8, 1);
  data::GroundTruthMask mask{8, 8, std::vector<std::uint8_t>(64, 0)};
  mask.labels[9] = 1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = augment::sample_transform(off, 8, 8, seed);
    CHECK(t.symmetry == D4Element::Identity);
    CHECK_FALSE(t.elastic);
    const auto [a, m] = augment::train_augment(img, mask, off, seed);
    CHECK(a.rgb == img.rgb);
    CHECK(m.labels == mask.labels);
  }
}

TEST_CASE("augment: image and mask receive the same geometric transform") {
  // channel 0 mirrors the mask; without elastic warps the pairing must survive exactly
  augment::AugmentSettings geo{0.5, 0.5, 0.0, 2.0, 6.0};
  data::CompositeImage img{6, 6, std::vector<float>(3 * 36)};
  data::GroundTruthMask mask{6, 6, std::vector<std::uint8_t>(36)};
  for (int i = 0; i < 36; ++i) {
    mask.labels[i] = static_cast<std::uint8_t>((i * 7 + i / 6) % 3 == 0);
    img.rgb[i] = mask.labels[i];
    img.rgb[36 + i] = 0.5f;
    img.rgb[72 + i] = static_cast<float>(i) / 36.0f;
  }
  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    const auto [a, m] = augment::train_augment(img, mask, geo, seed);
    seen.insert(static_cast<int>(augment::sample_transform(geo, 6, 6, seed).symmetry));
    for (int i = 0; i < 36; ++i) CHECK(a.rgb[i] == static_cast<float>(m.labels[i]));
  }
  CHECK(seen.size() == 8);
}

TEST_CASE("augment: elastic warps keep masks binary, constants constant, and are seed-deterministic") {
  augment::AugmentSettings heavy{0.5, 0.5, 1.0, 3.0, 4.0};
  data::CompositeImage flat{16, 16, std::vector<float>(3 * 256, 0.25f)};
  data::GroundTruthMask mask{16, 16, std::vector<std::uint8_t>(256)};
  for (int i = 0; i < 256; ++i) mask.labels[i] = static_cast<std::uint8_t>(((i / 16) / 4 + (i % 16) / 4) % 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = augment::sample_transform(heavy, 16, 16, seed);
    CHECK(t.elastic);
    float biggest = 0.0f;
    for (std::size_t i = 0; i < t.dx.size(); ++i) biggest = std::max({biggest, std::abs(t.dx[i]), std::abs(t.dy[i])});
    CHECK(biggest <= doctest::Approx(3.0).epsilon(1e-5));
    const auto [a, m] = augment::train_augment(flat, mask, heavy, seed);
    CHECK(std::all_of(m.labels.begin(), m.labels.end(), [](std::uint8_t v) { return v <= 1; }));
    for (float v : a.rgb) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6));
    const auto [a2, m2] = augment::train_augment(flat, mask, heavy, seed);
    CHECK(m2.labels == m.labels);
    CHECK(a2.rgb == a.rgb);
  }
}

TEST_CASE("augment: bilinear resampling with a pure symmetry is an exact permutation") {
  augment::GeometricTransform t;
  t.symmetry = D4Element::Rot270;
  t.height = t.width = 5;
  std::vector<float> planes(2 * 25);
  std::iota(planes.begin(), planes.end(), 0.0f);
  CHECK(augment::apply_bilinear(t, planes, 2) == d4_apply(D4Element::Rot270, planes, 2, 5, 5));
}
