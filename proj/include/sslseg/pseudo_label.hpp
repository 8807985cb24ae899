#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sslseg/core_data.hpp"
#include "sslseg/probability.hpp"

namespace sslseg::pseudo {

/// Class probabilities and per-pixel confidence (max class probability) for one tile.
struct Prediction {
  std::string tile_id;
  int height = 0;
  int width = 0;
  std::vector<double> probs;       // planar (2, h, w)
  std::vector<double> confidence;  // (h, w), in [0.5, 1]
  std::vector<std::uint8_t> valid; // optional; empty means every pixel counts
};

/// Per-pixel max of the class softmax of planar (2, h, w) logits.
/// Throws NumericError on NaN.
std::vector<double> pixel_confidence(std::span<const double> logits, int height, int width);

Prediction prediction_from_logits(std::string tile_id, std::span<const double> logits, int height, int width);
Prediction prediction_from_probabilities(std::string tile_id, const ProbabilityMap& map);

struct ConfidenceFilterConfig {
  double confidence = 0.9;  // c
  double proportion = 0.9;  // p
  void validate() const;
};

struct FilterDecision {
  std::string tile_id;
  bool kept = false;
  std::size_t confident_pixel_count = 0;
  double required_count = 0.0;  // p * (number of counted pixels)
};

/// Keeps a tile iff #{pixels with confidence > c} > p * h * w. Both
/// comparisons are strict. Pixels flagged invalid are left out of the count
/// and of h * w.
FilterDecision filter_decision(const Prediction& prediction, const ConfidenceFilterConfig& config);

/// Per-pixel argmax; exact ties resolve to 0 (not flooded).
data::GroundTruthMask hard_labels(const Prediction& prediction);

/// A pseudo-labelled tile from the unlabeled pool.
struct PseudoLabel {
  data::ExampleRef source;  // image and imagery; its own mask is never read
  data::GroundTruthMask mask;
};

/// All HIGH-tier examples of `train` plus `kept` as LOW-tier examples. LOW-tier
/// examples already in `train` are dropped (replacement, not accumulation).
/// Throws AssimilationError when a kept id collides with a HIGH-tier id.
data::DatasetIndex assimilate(const data::DatasetIndex& train, const std::vector<PseudoLabel>& kept);

}  // namespace sslseg::pseudo
