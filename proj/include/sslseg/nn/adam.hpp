#pragma once

#include <cstdint>
#include <vector>

#include "sslseg/nn/graph.hpp"

namespace sslseg::nn {

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
/// weight_decay is plain L2 added to the gradient; 0 disables it.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit Adam(std::vector<Parameter*> params);
  Adam(std::vector<Parameter*> params, Options options);

  void zero_grad();
  void step(double lr);
  std::int64_t steps() const noexcept { return t_; }

 private:
  std::vector<Parameter*> params_;
  Options opt_;
  std::vector<std::vector<float>> m_, v_;
  std::int64_t t_ = 0;
};

/// Cosine decay from `base_lr` at step 0 to 0 at `total_steps`.
double cosine_decay(double base_lr, std::int64_t step, std::int64_t total_steps);

}  // namespace sslseg::nn
