#include <algorithm>
#include <chrono>
#include <cmath>

#include "sslseg/error.hpp"
#include "sslseg/pipeline.hpp"

namespace sslseg::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// nearest-rank percentile
double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

StageLatency summarize(const std::string& stage, const std::vector<double>& samples) {
  return {stage, percentile(samples, 0.5), percentile(samples, 0.95), samples.size()};
}

}  // namespace

const StageLatency* LatencyReport::find(const std::string& stage) const {
  for (const auto& s : stages)
    if (s.stage == stage) return &s;
  return nullptr;
}

LatencyReport benchmark_inference(const models::EnsembleModel& model, std::span<const data::CompositeImage> tiles,
                                  bool use_tta, bool use_crf, int repetitions, const crf::CRFParams& crf_params) {
  if (repetitions < 3) throw ConfigError("benchmark repetitions must be at least 3");
  if (tiles.empty()) throw ValidationError("benchmark needs at least one tile");
  if (model.members.empty()) throw ValidationError("benchmark needs at least one model");
  crf_params.validate();

  std::vector<double> forward, tta, crf;
  for (int rep = 0; rep < repetitions; ++rep) {
    for (const auto& tile : tiles) {
      auto t0 = Clock::now();
      auto probs = models::ensemble_predict(model, tile, false);
      forward.push_back(ms_since(t0));
      if (use_tta) {
        t0 = Clock::now();
        probs = models::ensemble_predict(model, tile, true);
        tta.push_back(ms_since(t0));
      }
      if (use_crf) {
        t0 = Clock::now();
        const auto refined = crf::crf_refine(probs, tile, crf_params);
        crf.push_back(ms_since(t0));
      }
    }
  }
  LatencyReport report;
  report.tiles = tiles.size();
  report.repetitions = repetitions;
  report.stages.push_back(summarize("forward", forward));
  if (use_tta) report.stages.push_back(summarize("tta", tta));
  if (use_crf) report.stages.push_back(summarize("crf", crf));
  return report;
}

nlohmann::json to_json(const LatencyReport& report) {
  nlohmann::json j;
  j["tiles"] = report.tiles;
  j["repetitions"] = report.repetitions;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : report.stages)
    j["stages"].push_back(
        {{"stage", s.stage}, {"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}, {"samples", s.samples}});
  return j;
}

}  // namespace sslseg::pipeline
