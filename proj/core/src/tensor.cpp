#include "prp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "prp/errors.hpp"

namespace prp {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw InputError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
    throw InputError("tensor value count " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

int64_t Tensor::offset(std::initializer_list<int64_t> index) const {
  if (index.size() != shape_.size()) throw InputError("index rank mismatch");
  int64_t off = 0;
  size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= shape_[axis]) throw InputError("tensor index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<int64_t> index) { return data_[static_cast<size_t>(offset(index))]; }
double Tensor::at(std::initializer_list<int64_t> index) const {
  return data_[static_cast<size_t>(offset(index))];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw InputError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw InputError("shape mismatch in +=: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
  }
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

Tensor Tensor::slice0(int64_t index) const {
  if (shape_.empty() || index < 0 || index >= shape_[0]) throw InputError("slice0 out of range");
  Shape item(shape_.begin() + 1, shape_.end());
  const int64_t n = shape_numel(item);
  std::vector<double> values(data_.begin() + index * n, data_.begin() + (index + 1) * n);
  return Tensor(std::move(item), std::move(values));
}

void Tensor::set_slice0(int64_t index, const Tensor& item) {
  if (shape_.empty() || index < 0 || index >= shape_[0]) throw InputError("set_slice0 out of range");
  if (!std::equal(shape_.begin() + 1, shape_.end(), item.shape_.begin(), item.shape_.end())) {
    throw InputError("set_slice0 shape mismatch");
  }
  std::copy(item.data_.begin(), item.data_.end(), data_.begin() + index * item.numel());
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) throw InputError("cannot stack zero tensors");
  Shape shape{static_cast<int64_t>(items.size())};
  shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
  Tensor out(shape);
  for (size_t i = 0; i < items.size(); ++i) out.set_slice0(static_cast<int64_t>(i), items[i]);
  return out;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
double Tensor::min() const {
  if (data_.empty()) throw InputError("min of empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}
double Tensor::max() const {
  if (data_.empty()) throw InputError("max of empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}
bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<InterpTap> align_corner_taps(int64_t in, int64_t out) {
  if (in < 1 || out < 1) throw ConfigError("interpolation sizes must be positive");
  std::vector<InterpTap> taps(static_cast<size_t>(out));
  for (int64_t o = 0; o < out; ++o) {
    InterpTap& tap = taps[static_cast<size_t>(o)];
    if (in == 1 || out == 1) {
      tap = {0, 0, 0.0};
      continue;
    }
    const double pos = static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
    tap.lo = std::min<int64_t>(static_cast<int64_t>(std::floor(pos)), in - 1);
    tap.hi = std::min<int64_t>(tap.lo + 1, in - 1);
    tap.frac = pos - static_cast<double>(tap.lo);
  }
  return taps;
}

namespace {

void check_5d(const Shape& shape, const char* what) {
  if (shape.size() != 5) throw InputError(std::string(what) + " expects an (N,C,D,H,W) tensor, got " + shape_str(shape));
}

}  // namespace

Tensor trilinear_resize(const Tensor& input, int64_t depth, int64_t height, int64_t width) {
  check_5d(input.shape(), "trilinear_resize");
  const int64_t n = input.dim(0), c = input.dim(1), d = input.dim(2), h = input.dim(3), w = input.dim(4);
  if (d == depth && h == height && w == width) return input;
  const auto td = align_corner_taps(d, depth);
  const auto th = align_corner_taps(h, height);
  const auto tw = align_corner_taps(w, width);
  Tensor out({n, c, depth, height, width});
  const double* src = input.data();
  double* dst = out.data();
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const double* p = src + plane * d * h * w;
    double* q = dst + plane * depth * height * width;
    for (int64_t z = 0; z < depth; ++z) {
      const auto& a = td[static_cast<size_t>(z)];
      for (int64_t y = 0; y < height; ++y) {
        const auto& b = th[static_cast<size_t>(y)];
        for (int64_t x = 0; x < width; ++x) {
          const auto& e = tw[static_cast<size_t>(x)];
          auto v = [&](int64_t zz, int64_t yy, int64_t xx) { return p[(zz * h + yy) * w + xx]; };
          const double c00 = v(a.lo, b.lo, e.lo) * (1 - e.frac) + v(a.lo, b.lo, e.hi) * e.frac;
          const double c01 = v(a.lo, b.hi, e.lo) * (1 - e.frac) + v(a.lo, b.hi, e.hi) * e.frac;
          const double c10 = v(a.hi, b.lo, e.lo) * (1 - e.frac) + v(a.hi, b.lo, e.hi) * e.frac;
          const double c11 = v(a.hi, b.hi, e.lo) * (1 - e.frac) + v(a.hi, b.hi, e.hi) * e.frac;
          const double c0 = c00 * (1 - b.frac) + c01 * b.frac;
          const double c1 = c10 * (1 - b.frac) + c11 * b.frac;
          q[(z * height + y) * width + x] = c0 * (1 - a.frac) + c1 * a.frac;
        }
      }
    }
  }
  return out;
}

Tensor trilinear_resize_backward(const Tensor& grad_output, const Shape& input_shape) {
  check_5d(input_shape, "trilinear_resize_backward");
  check_5d(grad_output.shape(), "trilinear_resize_backward");
  const int64_t n = input_shape[0], c = input_shape[1], d = input_shape[2], h = input_shape[3], w = input_shape[4];
  const int64_t depth = grad_output.dim(2), height = grad_output.dim(3), width = grad_output.dim(4);
  if (d == depth && h == height && w == width) return grad_output;
  const auto td = align_corner_taps(d, depth);
  const auto th = align_corner_taps(h, height);
  const auto tw = align_corner_taps(w, width);
  Tensor grad_input(input_shape);
  const double* g = grad_output.data();
  double* gi = grad_input.data();
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const double* q = g + plane * depth * height * width;
    double* p = gi + plane * d * h * w;
    for (int64_t z = 0; z < depth; ++z) {
      const auto& a = td[static_cast<size_t>(z)];
      for (int64_t y = 0; y < height; ++y) {
        const auto& b = th[static_cast<size_t>(y)];
        for (int64_t x = 0; x < width; ++x) {
          const auto& e = tw[static_cast<size_t>(x)];
          const double go = q[(z * height + y) * width + x];
          auto add = [&](int64_t zz, int64_t yy, int64_t xx, double wgt) { p[(zz * h + yy) * w + xx] += go * wgt; };
          add(a.lo, b.lo, e.lo, (1 - a.frac) * (1 - b.frac) * (1 - e.frac));
          add(a.lo, b.lo, e.hi, (1 - a.frac) * (1 - b.frac) * e.frac);
          add(a.lo, b.hi, e.lo, (1 - a.frac) * b.frac * (1 - e.frac));
          add(a.lo, b.hi, e.hi, (1 - a.frac) * b.frac * e.frac);
          add(a.hi, b.lo, e.lo, a.frac * (1 - b.frac) * (1 - e.frac));
          add(a.hi, b.lo, e.hi, a.frac * (1 - b.frac) * e.frac);
          add(a.hi, b.hi, e.lo, a.frac * b.frac * (1 - e.frac));
          add(a.hi, b.hi, e.hi, a.frac * b.frac * e.frac);
        }
      }
    }
  }
  return grad_input;
}

}  // namespace prp
