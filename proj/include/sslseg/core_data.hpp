#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace sslseg::data {

/// Two-polarization backscatter tile. Invalid (unobserved) pixels carry 0.
struct TilePair {
  std::string id;
  int height = 0;
  int width = 0;
  std::vector<float> vv;
  std::vector<float> vh;
  std::vector<std::uint8_t> valid;  // 1 = observed

  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
  /// Throws ShapeError when the three planes disagree with (height, width).
  void check_shape() const;
};

/// Three planar channels (r, g, b), each (height, width), values in [0, 1].
struct CompositeImage {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;

  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
  const float* channel(int c) const noexcept { return rgb.data() + c * pixels(); }
  float* channel(int c) noexcept { return rgb.data() + c * pixels(); }
};

/// Binary flood mask: 0 = not flooded, 1 = flooded.
struct GroundTruthMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
  bool any_flooded() const noexcept;
};

/// Dataset-level affine rescale used by compose_rgb. Ranges are fixed per
/// dataset (not per tile) so composites stay comparable across tiles.
struct CompositeNormalization {
  float vv_min = 0.0f;
  float vv_max = 0.5f;
  float vh_min = 0.0f;
  float vh_max = 0.15f;
  float ratio_min = 0.0f;
  float ratio_max = 20.0f;
};

inline constexpr float kRatioEpsilon = 1e-6f;

enum class ConfidenceTier { High, Low };
enum class Split { Train, Val, Test };

std::string_view to_string(ConfidenceTier tier);
std::string_view to_string(Split split);
ConfidenceTier tier_from_string(std::string_view s);
Split split_from_string(std::string_view s);

class LabeledExample {
 public:
  LabeledExample(TilePair tile, CompositeImage image, GroundTruthMask mask, ConfidenceTier tier,
                 std::string region);

  const std::string& id() const noexcept { return tile_.id; }
  const TilePair& tile() const noexcept { return tile_; }
  const CompositeImage& image() const noexcept { return image_; }
  const GroundTruthMask& mask() const noexcept { return mask_; }
  ConfidenceTier tier() const noexcept { return tier_; }
  const std::string& region() const noexcept { return region_; }
  bool flood_present() const noexcept { return flood_present_; }

 private:
  TilePair tile_;
  CompositeImage image_;
  GroundTruthMask mask_;
  ConfidenceTier tier_;
  std::string region_;
  bool flood_present_;
};

using ExampleRef = std::shared_ptr<const LabeledExample>;

/// Ordered collection of examples for one split; tile ids are unique.
class DatasetIndex {
 public:
  explicit DatasetIndex(Split split = Split::Train) : split_(split) {}

  Split split() const noexcept { return split_; }
  const std::vector<ExampleRef>& examples() const noexcept { return examples_; }
  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }
  const LabeledExample& operator[](std::size_t i) const { return *examples_[i]; }

  /// Throws ValidationError on a duplicate tile id.
  void add(ExampleRef example);
  bool contains(const std::string& id) const;
  std::size_t flood_present_count() const;

 private:
  Split split_;
  std::vector<ExampleRef> examples_;
};

CompositeImage compose_rgb(const TilePair& tile, const CompositeNormalization& norm = {});

double valid_fraction(const TilePair& tile);

/// Drops tiles whose valid fraction is strictly below `min_fraction`.
DatasetIndex filter_swath_gaps(const DatasetIndex& index, double min_fraction = 0.005);

/// Backscatter statistics of one synthetic "geographic region".
struct RegionProfile {
  std::string name = "region-a";
  float land_vv = 0.22f;
  float land_vh = 0.055f;
  float water_vv = 0.025f;
  float water_vh = 0.007f;
  float land_texture = 0.35f;    // relative amplitude of smooth land variation
  float confuser_rate = 0.0f;    // probability a tile carries a dark non-water field
};

struct GeneratorSpec {
  int tile_size = 64;
  int tile_count = 32;
  double flood_proportion = 0.5;
  double speckle_looks = 4.0;  // gamma speckle shape; larger is smoother
  double swath_gap_rate = 0.1;
  std::string id_prefix = "tile";
  Split split = Split::Train;
  RegionProfile region;
  CompositeNormalization normalization;
};

/// Deterministic for a fixed seed. Exactly round(flood_proportion * tile_count)
/// tiles are flood-present.
DatasetIndex generate_synthetic_dataset(const GeneratorSpec& spec, std::uint64_t seed);

}  // namespace sslseg::data
