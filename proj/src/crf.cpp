#include "sslseg/crf.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "sslseg/error.hpp"
#include "sslseg/parallel.hpp"

namespace sslseg::crf {

void CRFParams::validate() const {
  if (iterations < 0) throw ConfigError("crf.iterations must be non-negative");
  if (!(smoothness_weight >= 0.0)) throw ConfigError("crf.smoothness_weight must be non-negative");
  if (!(smoothness_sigma > 0.0)) throw ConfigError("crf.smoothness_sigma must be positive");
  if (!(appearance_weight >= 0.0)) throw ConfigError("crf.appearance_weight must be non-negative");
  if (!(appearance_sigma_rgb > 0.0)) throw ConfigError("crf.appearance_sigma_rgb must be positive");
}

double CRFParams::sigma_xy_for(int height) const noexcept {
  return appearance_sigma_xy > 0.0 ? appearance_sigma_xy : 80.0 * static_cast<double>(height) / 256.0;
}

namespace {

constexpr double kProbFloor = 1e-8;
// Memory allowed for cached pairwise matrices, shared by concurrently refined tiles.
constexpr std::size_t kKernelCacheBudget = std::size_t{1} << 30;
constexpr std::size_t kSingleTileCache = std::size_t{256} << 20;

void validate_inputs(const ProbabilityMap& probs, const data::CompositeImage& image, const CRFParams& params) {
  params.validate();
  check_simplex(probs);
  if (image.height != probs.height || image.width != probs.width || image.rgb.size() != 3 * probs.pixels())
    throw ShapeError("crf_refine: image and probability map sizes differ");
}

std::vector<double> unary_energy(const ProbabilityMap& probs) {
  std::vector<double> u(probs.probs.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = -std::log(std::clamp(probs.probs[i], kProbFloor, 1.0));
  return u;
}

RefinedPrediction finish(std::string id, ProbabilityMap q) {
  data::GroundTruthMask labels{q.height, q.width, std::vector<std::uint8_t>(q.pixels(), 0)};
  for (std::size_t i = 0; i < q.pixels(); ++i) labels.labels[i] = q.flooded(i) > q.background(i) ? 1 : 0;
  return {std::move(id), std::move(q), std::move(labels)};
}

// Q_i(l) proportional to exp(-U_i(l) - sum_{l' != l} m_i(l')), Potts compatibility.
void update_marginals(const std::vector<double>& unary, const std::vector<double>& messages, ProbabilityMap& q) {
  const std::size_t n = q.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    const double e0 = -unary[i] - messages[n + i];
    const double e1 = -unary[n + i] - messages[i];
    const double top = std::max(e0, e1);
    const double a = std::exp(e0 - top), b = std::exp(e1 - top);
    q.probs[i] = a / (a + b);
    q.probs[n + i] = b / (a + b);
  }
}

RefinedPrediction refine(const ProbabilityMap& probs, const data::CompositeImage& image, const CRFParams& params,
                         std::string tile_id, const RoundObserver& observer, std::size_t cache_bytes) {
  validate_inputs(probs, image, params);
  ProbabilityMap q = probs;
  if (params.iterations == 0) return finish(std::move(tile_id), std::move(q));

  const int h = probs.height, w = probs.width;
  const std::size_t n = probs.pixels();
  const auto unary = unary_energy(probs);

  // Separable spatial factors, indexed by |dy| and |dx|.
  const double sxy = params.sigma_xy_for(h);
  const int span = std::max(h, w);
  std::vector<double> smooth_tab(span), app_tab(span);
  for (int d = 0; d < span; ++d) {
    smooth_tab[d] = std::exp(-0.5 * d * d / (params.smoothness_sigma * params.smoothness_sigma));
    app_tab[d] = std::exp(-0.5 * d * d / (sxy * sxy));
  }
  const double w1 = params.smoothness_weight, w2 = params.appearance_weight;
  const double rgb_scale = 0.5 / (params.appearance_sigma_rgb * params.appearance_sigma_rgb);
  const float* r = image.channel(0);
  const float* g = image.channel(1);
  const float* b = image.channel(2);

  auto pair_kernel = [&](std::size_t i, std::size_t j) {
    const int dy = std::abs(static_cast<int>(i / w) - static_cast<int>(j / w));
    const int dx = std::abs(static_cast<int>(i % w) - static_cast<int>(j % w));
    const double dr = static_cast<double>(r[i]) - r[j];
    const double dg = static_cast<double>(g[i]) - g[j];
    const double db = static_cast<double>(b[i]) - b[j];
    return w1 * smooth_tab[dy] * smooth_tab[dx] +
           w2 * app_tab[dy] * app_tab[dx] * std::exp(-rgb_scale * (dr * dr + dg * dg + db * db));
  };

  std::vector<double> messages(2 * n);
  const int count = static_cast<int>(n);
  if (n * n * sizeof(double) <= cache_bytes) {
    // Small tiles: build the symmetric pairwise matrix once, then every round
    // is a dense mat-vec.
    std::vector<double> kernel(n * n);
#pragma omp parallel for num_threads(num_workers()) schedule(dynamic, 16)
    for (int ii = 0; ii < count; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      kernel[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) kernel[i * n + j] = pair_kernel(i, j);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) kernel[i * n + j] = kernel[j * n + i];

    for (int round = 0; round < params.iterations; ++round) {
      const double* q0 = q.probs.data();
      const double* q1 = q.probs.data() + n;
#pragma omp parallel for num_threads(num_workers()) schedule(static)
      for (int ii = 0; ii < count; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* row = kernel.data() + i * n;
        double m0 = 0.0, m1 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          m0 += row[j] * q0[j];
          m1 += row[j] * q1[j];
        }
        messages[i] = m0;
        messages[n + i] = m1;
      }
      update_marginals(unary, messages, q);
      if (observer) observer(round, q);
    }
    return finish(std::move(tile_id), std::move(q));
  }

  for (int round = 0; round < params.iterations; ++round) {
    const double* q0 = q.probs.data();
    const double* q1 = q.probs.data() + n;
#pragma omp parallel for num_threads(num_workers()) schedule(static)
    for (int ii = 0; ii < count; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      double m0 = 0.0, m1 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double k = pair_kernel(i, j);
        m0 += k * q0[j];
        m1 += k * q1[j];
      }
      messages[i] = m0;
      messages[n + i] = m1;
    }
    update_marginals(unary, messages, q);
    if (observer) observer(round, q);
  }
  return finish(std::move(tile_id), std::move(q));
}

}  // namespace

RefinedPrediction crf_refine(const ProbabilityMap& probs, const data::CompositeImage& image, const CRFParams& params,
                             std::string tile_id, const RoundObserver& observer) {
  return refine(probs, image, params, std::move(tile_id), observer, kSingleTileCache);
}

std::vector<RefinedPrediction> crf_refine_batch(std::span<const ProbabilityMap> probs,
                                                std::span<const data::CompositeImage> images, const CRFParams& params,
                                                int parallelism, std::span<const std::string> tile_ids) {
  if (probs.size() != images.size()) throw ValidationError("crf_refine_batch: probability and image lists differ in length");
  if (!tile_ids.empty() && tile_ids.size() != probs.size())
    throw ValidationError("crf_refine_batch: tile id list length mismatch");
  params.validate();
  const int count = static_cast<int>(probs.size());
  const int workers = std::max(1, parallelism);
  const std::size_t cache = std::min(kSingleTileCache, kKernelCacheBudget / static_cast<std::size_t>(workers));
  std::vector<RefinedPrediction> out(probs.size());
  std::vector<std::exception_ptr> errors(probs.size());
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
  for (int t = 0; t < count; ++t) {
    const auto k = static_cast<std::size_t>(t);
    try {
      out[k] = refine(probs[k], images[k], params, tile_ids.empty() ? std::string{} : tile_ids[k], {}, cache);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace reference {

RefinedPrediction crf_refine(const ProbabilityMap& probs, const data::CompositeImage& image, const CRFParams& params) {
  validate_inputs(probs, image, params);
  ProbabilityMap q = probs;
  const int h = probs.height, w = probs.width;
  const std::size_t n = probs.pixels();
  const auto unary = unary_energy(probs);
  const double s2 = params.smoothness_sigma * params.smoothness_sigma;
  const double a2 = params.sigma_xy_for(h) * params.sigma_xy_for(h);
  const double c2 = params.appearance_sigma_rgb * params.appearance_sigma_rgb;
  std::vector<double> messages(2 * n);
  for (int round = 0; round < params.iterations; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      double m[2] = {0.0, 0.0};
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double dy = static_cast<double>(i / w) - static_cast<double>(j / w);
        const double dx = static_cast<double>(i % w) - static_cast<double>(j % w);
        double dc = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double d = static_cast<double>(image.channel(c)[i]) - image.channel(c)[j];
          dc += d * d;
        }
        const double pos = dx * dx + dy * dy;
        const double k = params.smoothness_weight * std::exp(-pos / (2 * s2)) +
                         params.appearance_weight * std::exp(-pos / (2 * a2) - dc / (2 * c2));
        m[0] += k * q.probs[j];
        m[1] += k * q.probs[n + j];
      }
      messages[i] = m[0];
      messages[n + i] = m[1];
    }
    update_marginals(unary, messages, q);
  }
  return finish({}, std::move(q));
}

}  // namespace reference

}  // namespace sslseg::crf
