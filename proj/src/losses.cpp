#include "sslseg/losses.hpp"

#include <cmath>

#include "sslseg/error.hpp"

namespace sslseg::loss {

void LossConfig::validate() const {
  if (!(dice_eps >= 0.0)) throw ConfigError("loss.dice_eps must be non-negative");
  if (!(focal_gamma >= 0.0)) throw ConfigError("loss.focal_gamma must be non-negative");
  if (!(focal_alpha > 0.0 && focal_alpha <= 1.0)) throw ConfigError("loss.focal_alpha must lie in (0, 1]");
  if (!(dice_weight >= 0.0)) throw ConfigError("loss.dice_weight must be non-negative");
  if (!(focal_weight >= 0.0)) throw ConfigError("loss.focal_weight must be non-negative");
  if (!(distill_alpha >= 0.0 && distill_alpha <= 1.0)) throw ConfigError("loss.distill_alpha must lie in [0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("loss.temperature must be positive");
}

namespace {

void check(std::span<const double> values, std::span<const std::uint8_t> target, const BatchShape& shape) {
  if (values.size() != shape.values()) throw ShapeError("loss: value array does not match (batch, 2, h, w)");
  if (!target.empty() && target.size() != shape.targets())
    throw ShapeError("loss: target array does not match (batch, h, w)");
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::vector<double> softmax(std::span<const double> logits, const BatchShape& shape, double temperature) {
  if (logits.size() != shape.values()) throw ShapeError("softmax: logits do not match (batch, 2, h, w)");
  std::vector<double> out(logits.size());
  const std::size_t n = shape.pixels();
  for (int b = 0; b < shape.batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * 2 * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (logits[base + n + i] - logits[base + i]) / temperature;
      out[base + i] = 1.0 / (1.0 + std::exp(d));
      out[base + n + i] = 1.0 / (1.0 + std::exp(-d));
    }
  }
  return out;
}

LossValue dice_loss(std::span<const double> probs, std::span<const std::uint8_t> target, const BatchShape& shape,
                    double eps) {
  check(probs, target, shape);
  if (target.empty()) throw ShapeError("dice_loss: target required");
  const std::size_t n = shape.pixels();
  LossValue out{0.0, std::vector<double>(probs.size(), 0.0)};
  if (shape.batch == 0) return out;
  const double inv_b = 1.0 / shape.batch;
  for (int b = 0; b < shape.batch; ++b) {
    const double* p = probs.data() + static_cast<std::size_t>(b) * 2 * n + n;
    const std::uint8_t* t = target.data() + static_cast<std::size_t>(b) * n;
    double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inter += p[i] * t[i];
      sum_p += p[i];
      sum_t += t[i];
    }
    const double num = 2.0 * inter + eps;
    const double den = sum_p + sum_t + eps;
    if (den == 0.0) continue;  // empty prediction and target with eps = 0: perfect match
    out.value += (1.0 - num / den) * inv_b;
    double* g = out.grad.data() + static_cast<std::size_t>(b) * 2 * n + n;
    for (std::size_t i = 0; i < n; ++i) g[i] = -(2.0 * t[i] * den - num) / (den * den) * inv_b;
  }
  return out;
}

LossValue dice_loss_logits(std::span<const double> logits, std::span<const std::uint8_t> target,
                           const BatchShape& shape, double eps) {
  check(logits, target, shape);
  const auto probs = softmax(logits, shape);
  LossValue d = dice_loss(probs, target, shape, eps);
  const std::size_t n = shape.pixels();
  for (int b = 0; b < shape.batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * 2 * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double g1 = d.grad[base + n + i] * probs[base + i] * probs[base + n + i];
      d.grad[base + i] = -g1;
      d.grad[base + n + i] = g1;
    }
  }
  return d;
}

LossValue focal_loss(std::span<const double> logits, std::span<const std::uint8_t> target, const BatchShape& shape,
                     double gamma, double alpha) {
  check(logits, target, shape);
  if (target.empty()) throw ShapeError("focal_loss: target required");
  const std::size_t n = shape.pixels();
  LossValue out{0.0, std::vector<double>(logits.size(), 0.0)};
  const std::size_t count = shape.targets();
  if (count == 0) return out;
  const double inv = 1.0 / static_cast<double>(count);
  for (int b = 0; b < shape.batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * 2 * n;
    for (std::size_t i = 0; i < n; ++i) {
      const int t = target[static_cast<std::size_t>(b) * n + i] ? 1 : 0;
      // margin of the true class over the other one
      const double d = (logits[base + n + i] - logits[base + i]) * (t ? 1.0 : -1.0);
      const double log_pt = -softplus(-d);
      const double pt = 1.0 / (1.0 + std::exp(-d));
      const double u = 1.0 / (1.0 + std::exp(d));  // 1 - pt without cancellation
      const double u_gamma = gamma == 0.0 ? 1.0 : std::pow(u, gamma);
      out.value += -alpha * u_gamma * log_pt * inv;
      const double extra = (gamma == 0.0 || u == 0.0) ? 0.0 : gamma * std::pow(u, gamma - 1.0) * pt * log_pt;
      const double s = -alpha * (u_gamma - extra) * inv;
      // d/dz_k = s * (delta_{k,t} - p_k); for the true class that is s * u.
      const double g_true = s * u;
      out.grad[base + (t ? n : 0) + i] = g_true;
      out.grad[base + (t ? 0 : n) + i] = -g_true;
    }
  }
  return out;
}

LossValue combined_loss(std::span<const double> logits, std::span<const std::uint8_t> target,
                        const BatchShape& shape, const LossConfig& config) {
  if (config.dice_weight < 0.0 || config.focal_weight < 0.0)
    throw ConfigError("combined_loss: loss weights must be non-negative");
  LossValue out{0.0, std::vector<double>(logits.size(), 0.0)};
  if (config.dice_weight != 0.0) {
    const auto d = dice_loss_logits(logits, target, shape, config.dice_eps);
    out.value += config.dice_weight * d.value;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += config.dice_weight * d.grad[i];
  }
  if (config.focal_weight != 0.0) {
    const auto f = focal_loss(logits, target, shape, config.focal_gamma, config.focal_alpha);
    out.value += config.focal_weight * f.value;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += config.focal_weight * f.grad[i];
  }
  return out;
}

LossValue distill_loss(std::span<const double> student_logits, std::span<const double> teacher_logits,
                       std::span<const std::uint8_t> target, std::span<const std::uint8_t> labeled,
                       const BatchShape& shape, double alpha, double temperature, double dice_eps) {
  if (!(temperature > 0.0)) throw ConfigError("distill_loss: temperature must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("distill_loss: alpha must lie in [0, 1]");
  check(student_logits, target, shape);
  if (teacher_logits.size() != student_logits.size())
    throw ShapeError("distill_loss: teacher and student logits differ in shape");
  if (labeled.size() != static_cast<std::size_t>(shape.batch))
    throw ShapeError("distill_loss: one labeled flag per sample required");

  const std::size_t n = shape.pixels();
  LossValue out{0.0, std::vector<double>(student_logits.size(), 0.0)};

  if (alpha < 1.0) {
    std::vector<int> rows;
    for (int b = 0; b < shape.batch; ++b)
      if (labeled[static_cast<std::size_t>(b)]) rows.push_back(b);
    if (!rows.empty()) {
      if (target.empty()) throw ShapeError("distill_loss: labeled samples need targets");
      BatchShape sub{static_cast<int>(rows.size()), shape.height, shape.width};
      std::vector<double> z(sub.values());
      std::vector<std::uint8_t> t(sub.targets());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto b = static_cast<std::size_t>(rows[r]);
        std::copy_n(student_logits.begin() + static_cast<std::ptrdiff_t>(b * 2 * n), 2 * n, z.begin() + static_cast<std::ptrdiff_t>(r * 2 * n));
        std::copy_n(target.begin() + static_cast<std::ptrdiff_t>(b * n), n, t.begin() + static_cast<std::ptrdiff_t>(r * n));
      }
      const auto d = dice_loss_logits(z, t, sub, dice_eps);
      out.value += (1.0 - alpha) * d.value;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto b = static_cast<std::size_t>(rows[r]);
        for (std::size_t i = 0; i < 2 * n; ++i) out.grad[b * 2 * n + i] += (1.0 - alpha) * d.grad[r * 2 * n + i];
      }
    }
  }

  if (alpha > 0.0 && shape.targets() > 0) {
    const auto q = softmax(teacher_logits, shape, temperature);
    const auto p = softmax(student_logits, shape, temperature);
    const double inv = 1.0 / static_cast<double>(shape.targets());
    double kl = 0.0;
    for (int b = 0; b < shape.batch; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * 2 * n;
      for (std::size_t i = 0; i < n; ++i) {
        // log-probabilities from the logit margin keep saturated pixels finite
        const double ds = (student_logits[base + n + i] - student_logits[base + i]) / temperature;
        const double dt = (teacher_logits[base + n + i] - teacher_logits[base + i]) / temperature;
        const double log_p[2] = {-softplus(ds), -softplus(-ds)};
        const double log_q[2] = {-softplus(dt), -softplus(-dt)};
        for (int k = 0; k < 2; ++k) {
          const std::size_t idx = base + static_cast<std::size_t>(k) * n + i;
          if (q[idx] > 0.0) kl += q[idx] * (log_q[k] - log_p[k]);
          out.grad[idx] += alpha * (p[idx] - q[idx]) / temperature * inv;
        }
      }
    }
    out.value += alpha * kl * inv;
  }
  return out;
}

}  // namespace sslseg::loss
