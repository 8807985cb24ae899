#include "sslseg/ensemble.hpp"

#include "sslseg/error.hpp"
#include "sslseg/parallel.hpp"
#include "sslseg/tta.hpp"

namespace sslseg::models {

ProbabilityMap ensemble_predict(const EnsembleModel& ensemble, const data::CompositeImage& image, bool use_tta) {
  if (ensemble.members.empty()) throw ValidationError("ensemble has no members");
  const int m = static_cast<int>(ensemble.members.size());
  std::vector<ProbabilityMap> maps(static_cast<std::size_t>(m));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(m));
#pragma omp parallel for num_threads(num_workers()) schedule(static)
  for (int k = 0; k < m; ++k) {
    try {
      const auto& member = *ensemble.members[static_cast<std::size_t>(k)];
      maps[static_cast<std::size_t>(k)] =
          use_tta ? augment::tta_predict(member, image) : augment::predict_probabilities(member, image);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ProbabilityMap out = maps.front();
  for (std::size_t k = 1; k < maps.size(); ++k) {
    if (maps[k].height != out.height || maps[k].width != out.width)
      throw ShapeError("ensemble members disagree on output shape");
    for (std::size_t i = 0; i < out.probs.size(); ++i) out.probs[i] += maps[k].probs[i];
  }
  if (m > 1)
    for (auto& v : out.probs) v /= static_cast<double>(m);
  return out;
}

}  // namespace sslseg::models
