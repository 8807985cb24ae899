#include "sslseg/nn/kernels.hpp"

#include <algorithm>
#include <vector>

#include <Eigen/Core>

#include "sslseg/error.hpp"
#include "sslseg/parallel.hpp"

namespace sslseg::nn {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void check_conv_shapes(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.c() != x.c())
    throw ShapeError("conv2d: weight " + weight.shape_string() + " does not match input " + x.shape_string());
  if (weight.h() != weight.w() || weight.h() % 2 == 0) throw ShapeError("conv2d: kernel must be odd and square");
  if (static_cast<int>(bias.size()) != weight.n()) throw ShapeError("conv2d: bias size mismatch");
}

void im2col(const float* x, int channels, int h, int w, int k, float* col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const float* src = x + c * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          float* row = dst + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, 0.0f);
            continue;
          }
          const int x_lo = std::max(0, pad - kx);
          const int x_hi = std::min(w, w + pad - kx);
          std::fill(row, row + x_lo, 0.0f);
          std::copy(src + static_cast<std::size_t>(sy) * w + x_lo + kx - pad,
                    src + static_cast<std::size_t>(sy) * w + x_hi + kx - pad, row + x_lo);
          std::fill(row + x_hi, row + w, 0.0f);
        }
      }
}

void col2im(const float* col, int channels, int h, int w, int k, float* dx) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        float* dst = dx + c * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const int x_lo = std::max(0, pad - kx);
          const int x_hi = std::min(w, w + pad - kx);
          const float* row = src + static_cast<std::size_t>(y) * w;
          float* out = dst + static_cast<std::size_t>(sy) * w + kx - pad;
          for (int x = x_lo; x < x_hi; ++x) out[x] += row[x];
        }
      }
}

}  // namespace

void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Tensor& y) {
  check_conv_shapes(x, weight, bias);
  const int n = x.n(), ci = x.c(), h = x.h(), w = x.w(), co = weight.n(), k = weight.h();
  const int hw = h * w;
  const int kk = ci * k * k;
  if (!(y.n() == n && y.c() == co && y.h() == h && y.w() == w)) y = Tensor(n, co, h, w);
  ConstMatMap wm(weight.data(), co, kk);

#pragma omp parallel num_threads(num_workers())
  {
    AlignedFloats col(k == 1 ? 0 : static_cast<std::size_t>(kk) * hw);
#pragma omp for schedule(static)
    for (int s = 0; s < n; ++s) {
      const float* src = x.sample(s);
      if (k != 1) {
        im2col(src, ci, h, w, k, col.data());
        src = col.data();
      }
      MatMap out(y.sample(s), co, hw);
      out.noalias() = wm * ConstMatMap(src, kk, hw);
      for (int o = 0; o < co; ++o) out.row(o).array() += bias.data()[o];
    }
  }
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx, Tensor& dweight,
                     Tensor& dbias) {
  check_conv_shapes(x, weight, dbias);
  const int n = x.n(), ci = x.c(), h = x.h(), w = x.w(), co = weight.n(), k = weight.h();
  const int hw = h * w;
  const int kk = ci * k * k;
  if (dx && !dx->same_shape(x)) *dx = Tensor(n, ci, h, w);
  ConstMatMap wm(weight.data(), co, kk);
  AlignedFloats partial_w(static_cast<std::size_t>(n) * co * kk);
  AlignedFloats partial_b(static_cast<std::size_t>(n) * co);

#pragma omp parallel num_threads(num_workers())
  {
    AlignedFloats col(k == 1 ? 0 : static_cast<std::size_t>(kk) * hw);
    AlignedFloats dcol(k == 1 || !dx ? 0 : static_cast<std::size_t>(kk) * hw);
#pragma omp for schedule(static)
    for (int s = 0; s < n; ++s) {
      ConstMatMap g(dy.sample(s), co, hw);
      const float* src = x.sample(s);
      if (k != 1) {
        im2col(src, ci, h, w, k, col.data());
        src = col.data();
      }
      MatMap(partial_w.data() + static_cast<std::size_t>(s) * co * kk, co, kk).noalias() =
          g * ConstMatMap(src, kk, hw).transpose();
      for (int o = 0; o < co; ++o) partial_b[static_cast<std::size_t>(s) * co + o] = g.row(o).sum();
      if (dx) {
        if (k == 1) {
          MatMap(dx->sample(s), ci, hw).noalias() = wm.transpose() * g;
        } else {
          MatMap(dcol.data(), kk, hw).noalias() = wm.transpose() * g;
          std::fill(dx->sample(s), dx->sample(s) + dx->sample_size(), 0.0f);
          col2im(dcol.data(), ci, h, w, k, dx->sample(s));
        }
      }
    }
  }
  for (int s = 0; s < n; ++s) {
    const float* pw = partial_w.data() + static_cast<std::size_t>(s) * co * kk;
    for (std::size_t i = 0; i < dweight.size(); ++i) dweight.data()[i] += pw[i];
    for (int o = 0; o < co; ++o) dbias.data()[o] += partial_b[static_cast<std::size_t>(s) * co + o];
  }
}

namespace {

void check_depthwise(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.n() != x.c() || weight.c() != 1 || weight.h() != 3 || weight.w() != 3)
    throw ShapeError("depthwise3x3: weight " + weight.shape_string() + " does not match input " + x.shape_string());
  if (static_cast<int>(bias.size()) != x.c()) throw ShapeError("depthwise3x3: bias size mismatch");
}

}  // namespace

void depthwise3x3_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Tensor& y) {
  check_depthwise(x, weight, bias);
  const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
  if (!y.same_shape(x)) y = Tensor(n, c, h, w);
  const int planes = n * c;
#pragma omp parallel for num_threads(num_workers()) schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int ch = p % c;
    const float* src = x.plane(p / c, ch);
    float* dst = y.plane(p / c, ch);
    const float* k = weight.data() + ch * 9;
    std::fill(dst, dst + static_cast<std::size_t>(h) * w, bias.data()[ch]);
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const float kv = k[ky * 3 + kx];
        const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
        for (int yy = std::max(0, 1 - ky); yy < std::min(h, h + 1 - ky); ++yy) {
          const float* row = src + static_cast<std::size_t>(yy + ky - 1) * w + kx - 1;
          float* out = dst + static_cast<std::size_t>(yy) * w;
          for (int xx = x_lo; xx < x_hi; ++xx) out[xx] += kv * row[xx];
        }
      }
  }
}

void depthwise3x3_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx,
                           Tensor& dweight, Tensor& dbias) {
  check_depthwise(x, weight, dbias);
  const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
  if (dx && !dx->same_shape(x)) *dx = Tensor(n, c, h, w);
  const int planes = n * c;
  AlignedFloats partial_w(static_cast<std::size_t>(planes) * 9, 0.0f);
  AlignedFloats partial_b(static_cast<std::size_t>(planes), 0.0f);
#pragma omp parallel for num_threads(num_workers()) schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int ch = p % c;
    const float* src = x.plane(p / c, ch);
    const float* g = dy.plane(p / c, ch);
    float* gx = dx ? dx->plane(p / c, ch) : nullptr;
    if (gx) std::fill(gx, gx + static_cast<std::size_t>(h) * w, 0.0f);
    const float* k = weight.data() + ch * 9;
    float bsum = 0.0f;
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) bsum += g[i];
    partial_b[p] = bsum;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const float kv = k[ky * 3 + kx];
        const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
        float acc = 0.0f;
        for (int yy = std::max(0, 1 - ky); yy < std::min(h, h + 1 - ky); ++yy) {
          const std::size_t off = static_cast<std::size_t>(yy + ky - 1) * w + kx - 1;
          const float* row = src + off;
          const float* grow = g + static_cast<std::size_t>(yy) * w;
          for (int xx = x_lo; xx < x_hi; ++xx) acc += grow[xx] * row[xx];
          if (gx) {
            float* out = gx + off;
            for (int xx = x_lo; xx < x_hi; ++xx) out[xx] += kv * grow[xx];
          }
        }
        partial_w[static_cast<std::size_t>(p) * 9 + ky * 3 + kx] = acc;
      }
  }
  for (int p = 0; p < planes; ++p) {
    const int ch = p % c;
    for (int i = 0; i < 9; ++i) dweight.data()[ch * 9 + i] += partial_w[static_cast<std::size_t>(p) * 9 + i];
    dbias.data()[ch] += partial_b[p];
  }
}

namespace reference {

void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Tensor& y) {
  check_conv_shapes(x, weight, bias);
  const int k = weight.h(), pad = k / 2;
  y = Tensor(x.n(), weight.n(), x.h(), x.w());
  for (int s = 0; s < x.n(); ++s)
    for (int o = 0; o < weight.n(); ++o)
      for (int yy = 0; yy < x.h(); ++yy)
        for (int xx = 0; xx < x.w(); ++xx) {
          double acc = bias.data()[o];
          for (int i = 0; i < x.c(); ++i)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = yy + ky - pad, sx = xx + kx - pad;
                if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
                acc += static_cast<double>(weight.at(o, i, ky, kx)) * x.at(s, i, sy, sx);
              }
          y.at(s, o, yy, xx) = static_cast<float>(acc);
        }
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx, Tensor& dweight,
                     Tensor& dbias) {
  check_conv_shapes(x, weight, dbias);
  const int k = weight.h(), pad = k / 2;
  if (dx) *dx = Tensor(x.n(), x.c(), x.h(), x.w());
  for (int s = 0; s < x.n(); ++s)
    for (int o = 0; o < weight.n(); ++o)
      for (int yy = 0; yy < x.h(); ++yy)
        for (int xx = 0; xx < x.w(); ++xx) {
          const float g = dy.at(s, o, yy, xx);
          dbias.data()[o] += g;
          for (int i = 0; i < x.c(); ++i)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = yy + ky - pad, sx = xx + kx - pad;
                if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
                dweight.at(o, i, ky, kx) += g * x.at(s, i, sy, sx);
                if (dx) dx->at(s, i, sy, sx) += g * weight.at(o, i, ky, kx);
              }
        }
}

void depthwise3x3_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Tensor& y) {
  check_depthwise(x, weight, bias);
  y = Tensor(x.n(), x.c(), x.h(), x.w());
  for (int s = 0; s < x.n(); ++s)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < x.h(); ++yy)
        for (int xx = 0; xx < x.w(); ++xx) {
          double acc = bias.data()[c];
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int sy = yy + ky - 1, sx = xx + kx - 1;
              if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
              acc += static_cast<double>(weight.at(c, 0, ky, kx)) * x.at(s, c, sy, sx);
            }
          y.at(s, c, yy, xx) = static_cast<float>(acc);
        }
}

void depthwise3x3_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx,
                           Tensor& dweight, Tensor& dbias) {
  check_depthwise(x, weight, dbias);
  if (dx) *dx = Tensor(x.n(), x.c(), x.h(), x.w());
  for (int s = 0; s < x.n(); ++s)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < x.h(); ++yy)
        for (int xx = 0; xx < x.w(); ++xx) {
          const float g = dy.at(s, c, yy, xx);
          dbias.data()[c] += g;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int sy = yy + ky - 1, sx = xx + kx - 1;
              if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
              dweight.at(c, 0, ky, kx) += g * x.at(s, c, sy, sx);
              if (dx) dx->at(s, c, sy, sx) += g * weight.at(c, 0, ky, kx);
            }
        }
}

}  // namespace reference

}  // namespace sslseg::nn
