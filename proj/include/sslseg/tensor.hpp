#pragma once

#include <array>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace sslseg {

/// 64-byte aligned storage. Vectorised reductions peel a prefix that depends
/// on the buffer address, so a fixed alignment keeps float results
/// reproducible from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedFloats = std::vector<float, AlignedAllocator<float>>;

/// Dense float32 array in NCHW order. Weights use the same layout
/// (out, in, kh, kw); vectors are stored as (1, c, 1, 1).
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f);

  int n() const noexcept { return shape_[0]; }
  int c() const noexcept { return shape_[1]; }
  int h() const noexcept { return shape_[2]; }
  int w() const noexcept { return shape_[3]; }
  const std::array<int, 4>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> span() noexcept { return data_; }
  std::span<const float> span() const noexcept { return data_; }

  float& at(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const noexcept { return data_[index(n, c, y, x)]; }

  /// Contiguous (h, w) plane of sample n, channel c.
  float* plane(int n, int c) noexcept { return data_.data() + index(n, c, 0, 0); }
  const float* plane(int n, int c) const noexcept { return data_.data() + index(n, c, 0, 0); }
  /// Contiguous (c, h, w) block of sample n.
  float* sample(int n) noexcept { return data_.data() + index(n, 0, 0, 0); }
  const float* sample(int n) const noexcept { return data_.data() + index(n, 0, 0, 0); }
  std::size_t sample_size() const noexcept {
    return static_cast<std::size_t>(shape_[1]) * shape_[2] * shape_[3];
  }

  void fill(float v);
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  std::string shape_string() const;

 private:
  std::size_t index(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  std::array<int, 4> shape_{0, 0, 0, 0};
  AlignedFloats data_;
};

}  // namespace sslseg
