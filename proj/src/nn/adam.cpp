#include "sslseg/nn/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sslseg::nn {

Adam::Adam(std::vector<Parameter*> params) : Adam(std::move(params), Options{}) {}

Adam::Adam(std::vector<Parameter*> params, Options options) : params_(std::move(params)), opt_(options) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(opt_.beta1), b2 = static_cast<float>(opt_.beta2);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_bc2_sqrt = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(opt_.eps), wd = static_cast<float>(opt_.weight_decay);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.grad.size() != p.value.size()) continue;
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float gi = g[i] + wd * w[i];
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_bc2_sqrt + eps);
    }
  }
}

double cosine_decay(double base_lr, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) return base_lr;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace sslseg::nn
