#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sslseg/tensor.hpp"

namespace sslseg::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.n(), value.c(), value.h(), value.w()); }
};

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::function<void()> backward;

  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

/// Records nodes in creation order so backward() can replay them in reverse.
/// Ops called with a null tape compute values only (inference).
class Tape {
 public:
  Var record(Var node);
  /// Seeds d(loss)/d(output) and runs every recorded backward closure.
  void backward(const Var& output, Tensor output_grad);
  void clear() { nodes_.clear(); }

 private:
  std::vector<Var> nodes_;
};

Var constant(Tensor value);

Var conv2d(Tape* tape, const Var& x, Parameter& weight, Parameter& bias);
Var depthwise3x3(Tape* tape, const Var& x, Parameter& weight, Parameter& bias);
Var relu(Tape* tape, const Var& x);
Var maxpool2(Tape* tape, const Var& x);
Var upsample2(Tape* tape, const Var& x);
Var concat(Tape* tape, const std::vector<Var>& parts);
Var add(Tape* tape, const Var& a, const Var& b);
/// Keeps the top-left (height, width) window.
Var crop(Tape* tape, const Var& x, int height, int width);

}  // namespace sslseg::nn
