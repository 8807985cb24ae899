#pragma once

#include "sslseg/core_data.hpp"
#include "sslseg/models.hpp"
#include "sslseg/probability.hpp"

namespace sslseg::augment {

/// softmax(model(image)) without augmentation.
ProbabilityMap predict_probabilities(const models::SegmentationModel& model, const data::CompositeImage& image);

/// Mean over all 8 D4 elements g of g^-1(softmax(model(g(image)))).
/// Probabilities are averaged, not logits. Requires a square image.
ProbabilityMap tta_predict(const models::SegmentationModel& model, const data::CompositeImage& image);

}  // namespace sslseg::augment
