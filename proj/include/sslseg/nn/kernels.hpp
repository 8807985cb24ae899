#pragma once

#include "sslseg/tensor.hpp"

namespace sslseg::nn {

// Stride-1 "same" convolutions with an odd square kernel (pad = k / 2).
// The optimised kernels split work over samples with OpenMP and reduce
// weight gradients in ascending sample order, so results do not depend on
// the worker count.

void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Tensor& y);
/// dx may be null when the input needs no gradient. dweight/dbias accumulate.
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx,
                     Tensor& dweight, Tensor& dbias);

/// Per-channel 3x3 convolution; weight is (c, 1, 3, 3).
void depthwise3x3_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Tensor& y);
void depthwise3x3_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx,
                           Tensor& dweight, Tensor& dbias);

namespace reference {

// Direct serial loops, kept as the test oracle for the kernels above.
void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Tensor& y);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx,
                     Tensor& dweight, Tensor& dbias);
void depthwise3x3_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Tensor& y);
void depthwise3x3_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx,
                           Tensor& dweight, Tensor& dbias);

}  // namespace reference

}  // namespace sslseg::nn
