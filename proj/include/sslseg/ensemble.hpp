#pragma once

#include <memory>
#include <vector>

#include "sslseg/models.hpp"
#include "sslseg/probability.hpp"

namespace sslseg::models {

/// Stacking ensemble: arithmetic mean of member probability maps, summed in
/// member order.
struct EnsembleModel {
  std::vector<std::shared_ptr<const SegmentationModel>> members;
};

/// Mean over members of tta_predict (use_tta) or softmax(forward).
/// Members are evaluated in parallel when several workers are available.
ProbabilityMap ensemble_predict(const EnsembleModel& ensemble, const data::CompositeImage& image, bool use_tta);

}  // namespace sslseg::models
