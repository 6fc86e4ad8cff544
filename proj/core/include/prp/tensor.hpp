#pragma once

#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace prp {

using Shape = std::vector<int64_t>;

/// 64-byte aligned storage, so vectorized kernels split every buffer the same way from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles. Network activations use NCDHW order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(std::initializer_list<int64_t> index);
  double at(std::initializer_list<int64_t> index) const;

  /// Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const;

  void fill(double value);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double scale);

  /// Slice along the leading axis.
  Tensor slice0(int64_t index) const;
  void set_slice0(int64_t index, const Tensor& item);

  /// Stacks equally shaped tensors along a new leading axis.
  static Tensor stack(std::span<const Tensor> items);

  double sum() const;
  double min() const;
  double max() const;
  bool all_finite() const;

 private:
  int64_t offset(std::initializer_list<int64_t> index) const;

  Shape shape_;
  AlignedBuffer data_;
};

/// 1-D linear interpolation weights for align-corners resampling from `in` to `out` samples.
struct InterpTap {
  int64_t lo = 0;
  int64_t hi = 0;
  double frac = 0.0;
};
std::vector<InterpTap> align_corner_taps(int64_t in, int64_t out);

/// Trilinear (align-corners) resize of the three trailing axes of an (N, C, D, H, W) tensor.
Tensor trilinear_resize(const Tensor& input, int64_t depth, int64_t height, int64_t width);

/// Adjoint of trilinear_resize: maps a gradient at the output shape back to `input_shape`.
Tensor trilinear_resize_backward(const Tensor& grad_output, const Shape& input_shape);

}  // namespace prp
