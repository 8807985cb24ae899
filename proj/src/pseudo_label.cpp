#include "sslseg/pseudo_label.hpp"

#include <cmath>
#include <unordered_set>

#include "sslseg/error.hpp"

namespace sslseg::pseudo {

std::vector<double> pixel_confidence(std::span<const double> logits, int height, int width) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (logits.size() != 2 * n) throw ShapeError("pixel_confidence: logits must be (2, h, w)");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z0 = logits[i], z1 = logits[n + i];
    if (std::isnan(z0) || std::isnan(z1)) throw NumericError("pixel_confidence: NaN logit at pixel " + std::to_string(i));
    // max(softmax) = sigmoid(|z1 - z0|)
    out[i] = 1.0 / (1.0 + std::exp(-std::abs(z1 - z0)));
  }
  return out;
}

Prediction prediction_from_logits(std::string tile_id, std::span<const double> logits, int height, int width) {
  Prediction p;
  p.tile_id = std::move(tile_id);
  p.height = height;
  p.width = width;
  p.confidence = pixel_confidence(logits, height, width);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  p.probs.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = logits[n + i] - logits[i];
    p.probs[i] = 1.0 / (1.0 + std::exp(d));
    p.probs[n + i] = 1.0 / (1.0 + std::exp(-d));
  }
  return p;
}

Prediction prediction_from_probabilities(std::string tile_id, const ProbabilityMap& map) {
  check_simplex(map);
  Prediction p;
  p.tile_id = std::move(tile_id);
  p.height = map.height;
  p.width = map.width;
  p.probs = map.probs;
  const std::size_t n = map.pixels();
  p.confidence.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.confidence[i] = std::max(map.probs[i], map.probs[n + i]);
  return p;
}

void ConfidenceFilterConfig::validate() const {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("filter.confidence must lie in (0, 1)");
  if (!(proportion > 0.0 && proportion < 1.0)) throw ConfigError("filter.proportion must lie in (0, 1)");
}

FilterDecision filter_decision(const Prediction& prediction, const ConfidenceFilterConfig& config) {
  const std::size_t n = static_cast<std::size_t>(prediction.height) * prediction.width;
  if (prediction.confidence.size() != n) throw ShapeError("filter_decision: confidence map does not match tile size");
  const bool masked = !prediction.valid.empty();
  if (masked && prediction.valid.size() != n) throw ShapeError("filter_decision: validity mask does not match tile size");
  FilterDecision d;
  d.tile_id = prediction.tile_id;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (masked && !prediction.valid[i]) continue;
    ++counted;
    if (prediction.confidence[i] > config.confidence) ++d.confident_pixel_count;
  }
  d.required_count = config.proportion * static_cast<double>(counted);
  d.kept = static_cast<double>(d.confident_pixel_count) > d.required_count;
  return d;
}

data::GroundTruthMask hard_labels(const Prediction& prediction) {
  const std::size_t n = static_cast<std::size_t>(prediction.height) * prediction.width;
  if (prediction.probs.size() != 2 * n) throw ShapeError("hard_labels: probabilities do not match tile size");
  data::GroundTruthMask m{prediction.height, prediction.width, std::vector<std::uint8_t>(n, 0)};
  for (std::size_t i = 0; i < n; ++i) m.labels[i] = prediction.probs[n + i] > prediction.probs[i] ? 1 : 0;
  return m;
}

data::DatasetIndex assimilate(const data::DatasetIndex& train, const std::vector<PseudoLabel>& kept) {
  data::DatasetIndex out(train.split());
  std::unordered_set<std::string> high_ids;
  for (const auto& e : train.examples())
    if (e->tier() == data::ConfidenceTier::High) {
      out.add(e);
      high_ids.insert(e->id());
    }
  for (const auto& pl : kept) {
    const auto& src = *pl.source;
    if (high_ids.count(src.id()))
      throw AssimilationError("pseudo-label tile '" + src.id() + "' collides with a high-confidence example");
    out.add(std::make_shared<data::LabeledExample>(src.tile(), src.image(), pl.mask, data::ConfidenceTier::Low,
                                                   src.region()));
  }
  return out;
}

}  // namespace sslseg::pseudo
