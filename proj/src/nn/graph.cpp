#include "sslseg/nn/graph.hpp"

#include <algorithm>
#include <limits>

#include "sslseg/error.hpp"
#include "sslseg/nn/kernels.hpp"
#include "sslseg/parallel.hpp"

namespace sslseg::nn {

Tensor& Node::grad_buffer() {
  if (!grad.same_shape(value)) grad = Tensor(value.n(), value.c(), value.h(), value.w());
  return grad;
}

Var Tape::record(Var node) {
  nodes_.push_back(node);
  return node;
}

void Tape::backward(const Var& output, Tensor output_grad) {
  if (!output_grad.same_shape(output->value))
    throw ShapeError("backward: gradient " + output_grad.shape_string() + " does not match output " +
                     output->value.shape_string());
  output->grad = std::move(output_grad);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& node = **it;
    if (node.backward && !node.grad.empty()) node.backward();
  }
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

namespace {

Var make_output(Tape* tape, Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (tape) {
    node->requires_grad = true;
    tape->record(node);
  }
  return node;
}

}  // namespace

Var conv2d(Tape* tape, const Var& x, Parameter& weight, Parameter& bias) {
  Tensor y;
  conv2d_forward(x->value, weight.value, bias.value, y);
  auto out = make_output(tape, std::move(y));
  if (tape) {
    Node* o = out.get();
    out->backward = [o, x, &weight, &bias] {
      Tensor* dx = x->requires_grad ? &x->grad_buffer() : nullptr;
      if (dx) {
        Tensor tmp;
        conv2d_backward(x->value, weight.value, o->grad, &tmp, weight.grad, bias.grad);
        float* d = dx->data();
        for (std::size_t i = 0; i < tmp.size(); ++i) d[i] += tmp.data()[i];
      } else {
        conv2d_backward(x->value, weight.value, o->grad, nullptr, weight.grad, bias.grad);
      }
    };
  }
  return out;
}

Var depthwise3x3(Tape* tape, const Var& x, Parameter& weight, Parameter& bias) {
  Tensor y;
  depthwise3x3_forward(x->value, weight.value, bias.value, y);
  auto out = make_output(tape, std::move(y));
  if (tape) {
    Node* o = out.get();
    out->backward = [o, x, &weight, &bias] {
      if (x->requires_grad) {
        Tensor tmp;
        depthwise3x3_backward(x->value, weight.value, o->grad, &tmp, weight.grad, bias.grad);
        Tensor& dx = x->grad_buffer();
        for (std::size_t i = 0; i < tmp.size(); ++i) dx.data()[i] += tmp.data()[i];
      } else {
        depthwise3x3_backward(x->value, weight.value, o->grad, nullptr, weight.grad, bias.grad);
      }
    };
  }
  return out;
}

Var relu(Tape* tape, const Var& x) {
  Tensor y = x->value;
  for (auto& v : y.span()) v = v > 0.0f ? v : 0.0f;
  auto out = make_output(tape, std::move(y));
  if (tape && x->requires_grad) {
    Node* o = out.get();
    out->backward = [o, x] {
      Tensor& dx = x->grad_buffer();
      const float* v = o->value.data();
      const float* g = o->grad.data();
      float* d = dx.data();
      for (std::size_t i = 0; i < dx.size(); ++i) d[i] += v[i] > 0.0f ? g[i] : 0.0f;
    };
  }
  return out;
}

Var maxpool2(Tape* tape, const Var& x) {
  const Tensor& in = x->value;
  if (in.h() % 2 || in.w() % 2) throw ShapeError("maxpool2: spatial size must be even, got " + in.shape_string());
  const int oh = in.h() / 2, ow = in.w() / 2;
  Tensor y(in.n(), in.c(), oh, ow);
  std::vector<std::uint32_t> argmax(y.size());
  const int planes = in.n() * in.c();
#pragma omp parallel for num_threads(num_workers()) schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* src = in.plane(p / in.c(), p % in.c());
    float* dst = y.plane(p / in.c(), p % in.c());
    std::uint32_t* am = argmax.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int yy = 0; yy < oh; ++yy)
      for (int xx = 0; xx < ow; ++xx) {
        std::uint32_t best = static_cast<std::uint32_t>(2 * yy * in.w() + 2 * xx);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const auto idx = static_cast<std::uint32_t>((2 * yy + dy) * in.w() + 2 * xx + dx);
            if (src[idx] > src[best]) best = idx;
          }
        dst[yy * ow + xx] = src[best];
        am[yy * ow + xx] = best;
      }
  }
  auto out = make_output(tape, std::move(y));
  if (tape && x->requires_grad) {
    Node* o = out.get();
    out->backward = [o, x, argmax = std::move(argmax), oh, ow] {
      Tensor& dx = x->grad_buffer();
      const int c = dx.c();
      for (int p = 0; p < dx.n() * c; ++p) {
        float* d = dx.plane(p / c, p % c);
        const float* g = o->grad.plane(p / c, p % c);
        const std::uint32_t* am = argmax.data() + static_cast<std::size_t>(p) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) d[am[i]] += g[i];
      }
    };
  }
  return out;
}

Var upsample2(Tape* tape, const Var& x) {
  const Tensor& in = x->value;
  Tensor y(in.n(), in.c(), in.h() * 2, in.w() * 2);
  for (int p = 0; p < in.n() * in.c(); ++p) {
    const float* src = in.plane(p / in.c(), p % in.c());
    float* dst = y.plane(p / in.c(), p % in.c());
    for (int yy = 0; yy < y.h(); ++yy)
      for (int xx = 0; xx < y.w(); ++xx) dst[yy * y.w() + xx] = src[(yy / 2) * in.w() + xx / 2];
  }
  auto out = make_output(tape, std::move(y));
  if (tape && x->requires_grad) {
    Node* o = out.get();
    out->backward = [o, x] {
      Tensor& dx = x->grad_buffer();
      const int c = dx.c();
      for (int p = 0; p < dx.n() * c; ++p) {
        float* d = dx.plane(p / c, p % c);
        const float* g = o->grad.plane(p / c, p % c);
        const int gw = o->grad.w();
        for (int yy = 0; yy < o->grad.h(); ++yy)
          for (int xx = 0; xx < gw; ++xx) d[(yy / 2) * dx.w() + xx / 2] += g[yy * gw + xx];
      }
    };
  }
  return out;
}

Var concat(Tape* tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = parts.front()->value;
  int channels = 0;
  for (const auto& p : parts) {
    const Tensor& t = p->value;
    if (t.n() != first.n() || t.h() != first.h() || t.w() != first.w())
      throw ShapeError("concat: " + t.shape_string() + " does not match " + first.shape_string());
    channels += t.c();
  }
  Tensor y(first.n(), channels, first.h(), first.w());
  for (int s = 0; s < first.n(); ++s) {
    float* dst = y.sample(s);
    for (const auto& p : parts) {
      const float* src = p->value.sample(s);
      dst = std::copy(src, src + p->value.sample_size(), dst);
    }
  }
  auto out = make_output(tape, std::move(y));
  if (tape) {
    Node* o = out.get();
    out->backward = [o, parts] {
      for (int s = 0; s < o->grad.n(); ++s) {
        const float* g = o->grad.sample(s);
        for (const auto& p : parts) {
          const std::size_t len = p->value.sample_size();
          if (p->requires_grad) {
            float* d = p->grad_buffer().sample(s);
            for (std::size_t i = 0; i < len; ++i) d[i] += g[i];
          }
          g += len;
        }
      }
    };
  }
  return out;
}

Var add(Tape* tape, const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw ShapeError("add: " + a->value.shape_string() + " vs " + b->value.shape_string());
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += b->value.data()[i];
  auto out = make_output(tape, std::move(y));
  if (tape) {
    Node* o = out.get();
    out->backward = [o, a, b] {
      for (const Var* v : {&a, &b}) {
        if (!(*v)->requires_grad) continue;
        Tensor& d = (*v)->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += o->grad.data()[i];
      }
    };
  }
  return out;
}

Var crop(Tape* tape, const Var& x, int height, int width) {
  const Tensor& in = x->value;
  if (height > in.h() || width > in.w()) throw ShapeError("crop: window larger than input");
  if (height == in.h() && width == in.w()) return x;
  Tensor y(in.n(), in.c(), height, width);
  for (int p = 0; p < in.n() * in.c(); ++p) {
    const float* src = in.plane(p / in.c(), p % in.c());
    float* dst = y.plane(p / in.c(), p % in.c());
    for (int yy = 0; yy < height; ++yy) std::copy(src + yy * in.w(), src + yy * in.w() + width, dst + yy * width);
  }
  auto out = make_output(tape, std::move(y));
  if (tape && x->requires_grad) {
    Node* o = out.get();
    out->backward = [o, x, height, width] {
      Tensor& dx = x->grad_buffer();
      const int c = dx.c();
      for (int p = 0; p < dx.n() * c; ++p) {
        float* d = dx.plane(p / c, p % c);
        const float* g = o->grad.plane(p / c, p % c);
        for (int yy = 0; yy < height; ++yy)
          for (int xx = 0; xx < width; ++xx) d[yy * dx.w() + xx] += g[yy * width + xx];
      }
    };
  }
  return out;
}

}  // namespace sslseg::nn
