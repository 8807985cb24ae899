#include "sslseg/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sslseg/error.hpp"
#include "sslseg/random.hpp"

namespace sslseg::data {

void TilePair::check_shape() const {
  if (height < 0 || width < 0) throw ShapeError("tile " + id + ": negative size");
  const std::size_t n = pixels();
  if (vv.size() != n || vh.size() != n || valid.size() != n)
    throw ShapeError("tile " + id + ": vv/vh/valid planes do not match " +
                     std::to_string(height) + "x" + std::to_string(width));
}

bool GroundTruthMask::any_flooded() const noexcept {
  return std::any_of(labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; });
}

std::string_view to_string(ConfidenceTier tier) {
  return tier == ConfidenceTier::High ? "high" : "low";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

ConfidenceTier tier_from_string(std::string_view s) {
  if (s == "high") return ConfidenceTier::High;
  if (s == "low") return ConfidenceTier::Low;
  throw ValidationError("unknown confidence tier '" + std::string(s) + "'");
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

LabeledExample::LabeledExample(TilePair tile, CompositeImage image, GroundTruthMask mask,
                               ConfidenceTier tier, std::string region)
    : tile_(std::move(tile)),
      image_(std::move(image)),
      mask_(std::move(mask)),
      tier_(tier),
      region_(std::move(region)) {
  tile_.check_shape();
  if (image_.height != tile_.height || image_.width != tile_.width ||
      image_.rgb.size() != 3 * tile_.pixels())
    throw ShapeError("example " + tile_.id + ": composite does not match tile shape");
  if (mask_.height != tile_.height || mask_.width != tile_.width ||
      mask_.labels.size() != tile_.pixels())
    throw ShapeError("example " + tile_.id + ": mask does not match tile shape");
  for (auto v : mask_.labels)
    if (v > 1) throw ValidationError("example " + tile_.id + ": mask values must be 0 or 1");
  flood_present_ = mask_.any_flooded();
}

void DatasetIndex::add(ExampleRef example) {
  if (contains(example->id()))
    throw ValidationError("duplicate tile id '" + example->id() + "' in dataset index");
  examples_.push_back(std::move(example));
}

bool DatasetIndex::contains(const std::string& id) const {
  return std::any_of(examples_.begin(), examples_.end(),
                     [&](const ExampleRef& e) { return e->id() == id; });
}

std::size_t DatasetIndex::flood_present_count() const {
  return static_cast<std::size_t>(std::count_if(
      examples_.begin(), examples_.end(), [](const ExampleRef& e) { return e->flood_present(); }));
}

namespace {

float rescale(float v, float lo, float hi) {
  const float span = hi - lo;
  const float t = span > 0.0f ? (v - lo) / span : 0.0f;
  return std::clamp(t, 0.0f, 1.0f);
}

}  // namespace

CompositeImage compose_rgb(const TilePair& tile, const CompositeNormalization& norm) {
  tile.check_shape();
  CompositeImage out;
  out.height = tile.height;
  out.width = tile.width;
  const std::size_t n = tile.pixels();
  out.rgb.assign(3 * n, 0.0f);
  float* r = out.channel(0);
  float* g = out.channel(1);
  float* b = out.channel(2);
  for (std::size_t i = 0; i < n; ++i) {
    if (!tile.valid[i]) continue;
    const float vv = std::abs(tile.vv[i]);
    const float vh = std::abs(tile.vh[i]);
    r[i] = rescale(vv, norm.vv_min, norm.vv_max);
    g[i] = rescale(vh, norm.vh_min, norm.vh_max);
    b[i] = rescale(vv / (vh + kRatioEpsilon), norm.ratio_min, norm.ratio_max);
  }
  return out;
}

double valid_fraction(const TilePair& tile) {
  if (tile.valid.empty()) return 0.0;
  const auto count = std::count_if(tile.valid.begin(), tile.valid.end(),
                                   [](std::uint8_t v) { return v != 0; });
  return static_cast<double>(count) / static_cast<double>(tile.valid.size());
}

DatasetIndex filter_swath_gaps(const DatasetIndex& index, double min_fraction) {
  if (!(min_fraction >= 0.0 && min_fraction <= 1.0))
    throw ConfigError("min_fraction must lie in [0, 1]");
  DatasetIndex out(index.split());
  for (const auto& e : index.examples())
    if (!(valid_fraction(e->tile()) < min_fraction)) out.add(e);
  return out;
}

namespace {

/// Smooth random field: a coarse Gaussian lattice, bilinearly upsampled.
std::vector<float> smooth_field(int size, int cells, std::mt19937_64& rng) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const int g = cells + 1;
  std::vector<float> lattice(static_cast<std::size_t>(g) * g);
  for (auto& v : lattice) v = normal(rng);
  std::vector<float> out(static_cast<std::size_t>(size) * size);
  const float scale = static_cast<float>(cells) / static_cast<float>(size);
  for (int y = 0; y < size; ++y) {
    const float fy = (static_cast<float>(y) + 0.5f) * scale;
    const int y0 = std::min(static_cast<int>(fy), cells - 1);
    const float ty = fy - static_cast<float>(y0);
    for (int x = 0; x < size; ++x) {
      const float fx = (static_cast<float>(x) + 0.5f) * scale;
      const int x0 = std::min(static_cast<int>(fx), cells - 1);
      const float tx = fx - static_cast<float>(x0);
      const float a = lattice[y0 * g + x0];
      const float b = lattice[y0 * g + x0 + 1];
      const float c = lattice[(y0 + 1) * g + x0];
      const float d = lattice[(y0 + 1) * g + x0 + 1];
      // smoothstep weights give C1 blobs instead of visible lattice creases
      const float sx = tx * tx * (3.0f - 2.0f * tx);
      const float sy = ty * ty * (3.0f - 2.0f * ty);
      out[static_cast<std::size_t>(y) * size + x] =
          (a * (1 - sx) + b * sx) * (1 - sy) + (c * (1 - sx) + d * sx) * sy;
    }
  }
  return out;
}

std::vector<std::uint8_t> threshold_top_fraction(const std::vector<float>& field, double fraction) {
  std::vector<float> sorted(field);
  const std::size_t n = sorted.size();
  const std::size_t keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n - keep),
                   sorted.end());
  const float t = sorted[n - keep];
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = field[i] >= t ? 1 : 0;
  return out;
}

// Swath gap: everything on one side of a random line is unobserved.
// `nearly_empty` keeps only a sliver below the 0.5% training threshold.
std::vector<std::uint8_t> swath_gap(int size, bool nearly_empty, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double angle = unit(rng) * 2.0 * 3.14159265358979323846;
  const double nx = std::cos(angle), ny = std::sin(angle);
  std::vector<double> proj(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) proj[static_cast<std::size_t>(y) * size + x] = nx * x + ny * y;
  const double keep = nearly_empty ? 0.002 : 0.3 + 0.6 * unit(rng);
  std::vector<double> sorted(proj);
  const std::size_t n = sorted.size();
  const std::size_t keep_n = std::max<std::size_t>(
      1, static_cast<std::size_t>(keep * static_cast<double>(n)));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep_n - 1),
                   sorted.end());
  const double t = sorted[keep_n - 1];
  std::vector<std::uint8_t> valid(n);
  std::size_t taken = 0;
  for (std::size_t i = 0; i < n; ++i) {
    valid[i] = (proj[i] <= t && taken < keep_n) ? 1 : 0;
    taken += valid[i];
  }
  return valid;
}

}  // namespace

DatasetIndex generate_synthetic_dataset(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.tile_size <= 0) throw ConfigError("generator tile_size must be positive");
  if (spec.tile_count <= 0) throw ConfigError("generator tile_count must be positive");
  if (!(spec.flood_proportion >= 0.0 && spec.flood_proportion <= 1.0))
    throw ConfigError("generator flood_proportion must lie in [0, 1]");
  if (!(spec.speckle_looks > 0.0)) throw ConfigError("generator speckle_looks must be positive");
  if (!(spec.swath_gap_rate >= 0.0 && spec.swath_gap_rate <= 1.0))
    throw ConfigError("generator swath_gap_rate must lie in [0, 1]");

  const int size = spec.tile_size;
  const std::size_t n_pix = static_cast<std::size_t>(size) * size;
  const auto n_flood = static_cast<std::size_t>(
      std::llround(spec.flood_proportion * static_cast<double>(spec.tile_count)));

  std::vector<std::uint8_t> flood_flags(static_cast<std::size_t>(spec.tile_count), 0);
  std::fill(flood_flags.begin(), flood_flags.begin() + static_cast<std::ptrdiff_t>(n_flood), 1);
  auto master = make_rng(seed, 0);
  std::shuffle(flood_flags.begin(), flood_flags.end(), master);

  const int cells = std::max(2, size / 16);
  DatasetIndex index(spec.split);
  for (int k = 0; k < spec.tile_count; ++k) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(k) + 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::gamma_distribution<float> speckle(static_cast<float>(spec.speckle_looks),
                                           static_cast<float>(1.0 / spec.speckle_looks));
    const bool flooded = flood_flags[static_cast<std::size_t>(k)] != 0;

    std::vector<std::uint8_t> water(n_pix, 0);
    if (flooded) water = threshold_top_fraction(smooth_field(size, cells, rng), 0.08 + 0.35 * unit(rng));
    const auto texture = smooth_field(size, cells * 2, rng);

    std::vector<std::uint8_t> confuser(n_pix, 0);
    if (unit(rng) < spec.region.confuser_rate) {
      const int w = size / 4 + static_cast<int>(unit(rng) * size / 3);
      const int hgt = size / 4 + static_cast<int>(unit(rng) * size / 3);
      const int x0 = static_cast<int>(unit(rng) * (size - w));
      const int y0 = static_cast<int>(unit(rng) * (size - hgt));
      for (int y = y0; y < y0 + hgt; ++y)
        for (int x = x0; x < x0 + w; ++x) confuser[static_cast<std::size_t>(y) * size + x] = 1;
    }

    std::vector<std::uint8_t> valid(n_pix, 1);
    if (unit(rng) < spec.swath_gap_rate) {
      const bool nearly_empty = !flooded && unit(rng) < 0.5;
      auto gap = swath_gap(size, nearly_empty, rng);
      bool keeps_flood = !flooded;
      for (std::size_t i = 0; i < n_pix && !keeps_flood; ++i) keeps_flood = gap[i] && water[i];
      if (keeps_flood) valid = std::move(gap);
    }

    TilePair tile;
    tile.id = spec.id_prefix + "-" + std::to_string(k);
    tile.height = tile.width = size;
    tile.vv.assign(n_pix, 0.0f);
    tile.vh.assign(n_pix, 0.0f);
    tile.valid = valid;
    GroundTruthMask mask{size, size, std::vector<std::uint8_t>(n_pix, 0)};
    const auto& reg = spec.region;
    for (std::size_t i = 0; i < n_pix; ++i) {
      if (!valid[i]) continue;
      float vv, vh;
      if (water[i]) {
        vv = reg.water_vv;
        vh = reg.water_vh;
        mask.labels[i] = 1;
      } else if (confuser[i]) {
        // harvested field: dark in VV, only moderately dark in VH
        vv = reg.water_vv * 1.6f;
        vh = reg.land_vh * 0.45f;
      } else {
        const float mod = std::max(0.2f, 1.0f + reg.land_texture * texture[i]);
        vv = reg.land_vv * mod;
        vh = reg.land_vh * mod;
      }
      tile.vv[i] = vv * speckle(rng);
      tile.vh[i] = vh * speckle(rng);
    }
    auto image = compose_rgb(tile, spec.normalization);
    index.add(std::make_shared<LabeledExample>(std::move(tile), std::move(image), std::move(mask),
                                               ConfidenceTier::High, reg.name));
  }
  return index;
}

}  // namespace sslseg::data
