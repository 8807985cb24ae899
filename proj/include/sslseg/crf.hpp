#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sslseg/core_data.hpp"
#include "sslseg/probability.hpp"

namespace sslseg::crf {

/// Fully connected CRF with a Potts compatibility and the kernel
///   k(i, j) = w1 exp(-|s_i - s_j|^2 / 2 sigma_smooth^2)
///           + w2 exp(-|s_i - s_j|^2 / 2 sigma_xy^2 - |I_i - I_j|^2 / 2 sigma_rgb^2)
/// where s are pixel coordinates and I composite colours.
struct CRFParams {
  int iterations = 5;
  double smoothness_weight = 3.0;
  double smoothness_sigma = 3.0;
  double appearance_weight = 10.0;
  /// <= 0 selects 80 * height / 256.
  double appearance_sigma_xy = 0.0;
  double appearance_sigma_rgb = 0.1;

  void validate() const;
  double sigma_xy_for(int height) const noexcept;
};

struct RefinedPrediction {
  std::string tile_id;
  ProbabilityMap q;
  data::GroundTruthMask labels;
};

/// Called after every mean-field round with the renormalised marginals.
using RoundObserver = std::function<void(int round, const ProbabilityMap& q)>;

/// T rounds of exact (all pairs) mean-field inference. Unary energy is
/// -log(clamp(p, 1e-8, 1)); with T = 0 the input is returned unchanged.
RefinedPrediction crf_refine(const ProbabilityMap& probs, const data::CompositeImage& image, const CRFParams& params,
                             std::string tile_id = {}, const RoundObserver& observer = {});

/// Parallel map of crf_refine over tiles; output order follows input order
/// and does not depend on `parallelism`.
std::vector<RefinedPrediction> crf_refine_batch(std::span<const ProbabilityMap> probs,
                                                std::span<const data::CompositeImage> images, const CRFParams& params,
                                                int parallelism, std::span<const std::string> tile_ids = {});

namespace reference {

/// Serial mean-field with the kernel evaluated directly per pair; test oracle.
RefinedPrediction crf_refine(const ProbabilityMap& probs, const data::CompositeImage& image, const CRFParams& params);

}  // namespace reference

}  // namespace sslseg::crf
