#include "prp/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "prp/errors.hpp"

namespace prp::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

int64_t kernel_volume(const Dims3& k) { return k[0] * k[1] * k[2]; }

void require_5d(const Shape& s, const char* layer) {
  if (s.size() != 5) throw InputError(std::string(layer) + " expects (N,C,D,H,W), got " + shape_str(s));
}

/// Convolution geometry over one sample: a (c, d, h, w) volume seen through kernel/stride/padding.
struct Geometry {
  int64_t c, d, h, w;
  Dims3 k, s, p;
  int64_t od, oh, ow;

  int64_t rows() const { return c * kernel_volume(k); }
  int64_t cols() const { return od * oh * ow; }
};

int64_t conv_out(int64_t in, int64_t k, int64_t s, int64_t p) { return (in + 2 * p - k) / s + 1; }

Geometry conv_geometry(int64_t c, int64_t d, int64_t h, int64_t w, const Dims3& k, const Dims3& s, const Dims3& p) {
  Geometry g{c, d, h, w, k, s, p, conv_out(d, k[0], s[0], p[0]), conv_out(h, k[1], s[1], p[1]),
             conv_out(w, k[2], s[2], p[2])};
  if (g.od < 1 || g.oh < 1 || g.ow < 1) throw InputError("convolution input smaller than kernel");
  return g;
}

void vol2col(const double* vol, const Geometry& g, double* col) {
  const int64_t ncol = g.cols();
  int64_t row = 0;
  for (int64_t c = 0; c < g.c; ++c) {
    const double* plane = vol + c * g.d * g.h * g.w;
    for (int64_t kz = 0; kz < g.k[0]; ++kz) {
      for (int64_t ky = 0; ky < g.k[1]; ++ky) {
        for (int64_t kx = 0; kx < g.k[2]; ++kx, ++row) {
          double* dst = col + row * ncol;
          for (int64_t oz = 0; oz < g.od; ++oz) {
            const int64_t iz = oz * g.s[0] - g.p[0] + kz;
            for (int64_t oy = 0; oy < g.oh; ++oy) {
              const int64_t iy = oy * g.s[1] - g.p[1] + ky;
              double* out = dst + (oz * g.oh + oy) * g.ow;
              if (iz < 0 || iz >= g.d || iy < 0 || iy >= g.h) {
                std::fill(out, out + g.ow, 0.0);
                continue;
              }
              const double* line = plane + (iz * g.h + iy) * g.w;
              for (int64_t ox = 0; ox < g.ow; ++ox) {
                const int64_t ix = ox * g.s[2] - g.p[2] + kx;
                out[ox] = (ix >= 0 && ix < g.w) ? line[ix] : 0.0;
              }
            }
          }
        }
      }
    }
  }
}

void col2vol(const double* col, const Geometry& g, double* vol) {
  const int64_t ncol = g.cols();
  int64_t row = 0;
  for (int64_t c = 0; c < g.c; ++c) {
    double* plane = vol + c * g.d * g.h * g.w;
    for (int64_t kz = 0; kz < g.k[0]; ++kz) {
      for (int64_t ky = 0; ky < g.k[1]; ++ky) {
        for (int64_t kx = 0; kx < g.k[2]; ++kx, ++row) {
          const double* src = col + row * ncol;
          for (int64_t oz = 0; oz < g.od; ++oz) {
            const int64_t iz = oz * g.s[0] - g.p[0] + kz;
            if (iz < 0 || iz >= g.d) continue;
            for (int64_t oy = 0; oy < g.oh; ++oy) {
              const int64_t iy = oy * g.s[1] - g.p[1] + ky;
              if (iy < 0 || iy >= g.h) continue;
              const double* in = src + (oz * g.oh + oy) * g.ow;
              double* line = plane + (iz * g.h + iy) * g.w;
              for (int64_t ox = 0; ox < g.ow; ++ox) {
                const int64_t ix = ox * g.s[2] - g.p[2] + kx;
                if (ix >= 0 && ix < g.w) line[ix] += in[ox];
              }
            }
          }
        }
      }
    }
  }
}

void normal_init(Tensor& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(int64_t in_channels, int64_t out_channels, Dims3 kernel, Dims3 stride, Dims3 padding, bool bias,
               std::mt19937_64& rng)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), padding_(padding), has_bias_(bias),
      weight_({out_channels, in_channels, kernel[0], kernel[1], kernel[2]}), bias_({bias ? out_channels : 0}) {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("conv channels must be positive");
  normal_init(weight_.value, std::sqrt(2.0 / static_cast<double>(in_channels * kernel_volume(kernel))), rng);
}

Shape Conv3d::output_shape(const Shape& input) const {
  require_5d(input, "Conv3d");
  if (input[1] != in_) throw ConfigError("Conv3d expects " + std::to_string(in_) + " channels, got " + std::to_string(input[1]));
  const auto g = conv_geometry(input[1], input[2], input[3], input[4], kernel_, stride_, padding_);
  return {input[0], out_, g.od, g.oh, g.ow};
}

Tensor Conv3d::forward(const Tensor& x, Mode) {
  const Shape out_shape = output_shape(x.shape());
  input_ = x;
  const auto g = conv_geometry(in_, x.dim(2), x.dim(3), x.dim(4), kernel_, stride_, padding_);
  Tensor y(out_shape);
  AlignedBuffer col(static_cast<size_t>(g.rows() * g.cols()));
  ConstMatMap w(weight_.value.data(), out_, g.rows());
  const int64_t in_size = in_ * g.d * g.h * g.w;
  for (int64_t n = 0; n < x.dim(0); ++n) {
    vol2col(x.data() + n * in_size, g, col.data());
    MatMap yn(y.data() + n * out_ * g.cols(), out_, g.cols());
    yn.noalias() = w * ConstMatMap(col.data(), g.rows(), g.cols());
    if (has_bias_) {
      for (int64_t o = 0; o < out_; ++o) yn.row(o).array() += bias_.value[o];
    }
  }
  return y;
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  const auto g = conv_geometry(in_, input_.dim(2), input_.dim(3), input_.dim(4), kernel_, stride_, padding_);
  Tensor grad_in(input_.shape());
  AlignedBuffer col(static_cast<size_t>(g.rows() * g.cols()));
  ConstMatMap w(weight_.value.data(), out_, g.rows());
  MatMap dw(weight_.grad.data(), out_, g.rows());
  const int64_t in_size = in_ * g.d * g.h * g.w;
  for (int64_t n = 0; n < input_.dim(0); ++n) {
    ConstMatMap gy(grad_out.data() + n * out_ * g.cols(), out_, g.cols());
    vol2col(input_.data() + n * in_size, g, col.data());
    dw.noalias() += gy * ConstMatMap(col.data(), g.rows(), g.cols()).transpose();
    MatMap dcol(col.data(), g.rows(), g.cols());
    dcol.noalias() = w.transpose() * gy;
    col2vol(col.data(), g, grad_in.data() + n * in_size);
    if (has_bias_) {
      for (int64_t o = 0; o < out_; ++o) bias_.grad[o] += gy.row(o).sum();
    }
  }
  return grad_in;
}

void Conv3d::collect(const std::string& prefix, NamedParams& params, NamedBuffers&) {
  params.emplace_back(prefix + "weight", &weight_);
  if (has_bias_) params.emplace_back(prefix + "bias", &bias_);
}

// ---------------------------------------------------------------------------
// ConvTranspose3d

ConvTranspose3d::ConvTranspose3d(int64_t in_channels, int64_t out_channels, Dims3 kernel, Dims3 stride,
                                 Dims3 padding, bool bias, std::mt19937_64& rng)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), padding_(padding), has_bias_(bias),
      weight_({in_channels, out_channels, kernel[0], kernel[1], kernel[2]}), bias_({bias ? out_channels : 0}) {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("deconv channels must be positive");
  const double fan_in =
      static_cast<double>(in_channels * kernel_volume(kernel)) / static_cast<double>(kernel_volume(stride));
  normal_init(weight_.value, std::sqrt(2.0 / fan_in), rng);
}

Shape ConvTranspose3d::output_shape(const Shape& input) const {
  require_5d(input, "ConvTranspose3d");
  if (input[1] != in_) {
    throw ConfigError("ConvTranspose3d expects " + std::to_string(in_) + " channels, got " + std::to_string(input[1]));
  }
  Shape out{input[0], out_, 0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    out[2 + i] = (input[2 + i] - 1) * stride_[i] - 2 * padding_[i] + kernel_[i];
    if (out[2 + i] < 1) throw InputError("transposed convolution output is empty");
  }
  return out;
}

Tensor ConvTranspose3d::forward(const Tensor& x, Mode) {
  out_shape_ = output_shape(x.shape());
  input_ = x;
  const auto g = conv_geometry(out_, out_shape_[2], out_shape_[3], out_shape_[4], kernel_, stride_, padding_);
  if (g.od != x.dim(2) || g.oh != x.dim(3) || g.ow != x.dim(4)) throw InputError("inconsistent deconv geometry");
  Tensor y(out_shape_);
  AlignedBuffer col(static_cast<size_t>(g.rows() * g.cols()));
  ConstMatMap w(weight_.value.data(), in_, g.rows());
  const int64_t out_size = out_ * g.d * g.h * g.w;
  for (int64_t n = 0; n < x.dim(0); ++n) {
    ConstMatMap xn(x.data() + n * in_ * g.cols(), in_, g.cols());
    MatMap(col.data(), g.rows(), g.cols()).noalias() = w.transpose() * xn;
    double* yn = y.data() + n * out_size;
    col2vol(col.data(), g, yn);
    if (has_bias_) {
      const int64_t plane = g.d * g.h * g.w;
      for (int64_t o = 0; o < out_; ++o) {
        for (int64_t i = 0; i < plane; ++i) yn[o * plane + i] += bias_.value[o];
      }
    }
  }
  return y;
}

Tensor ConvTranspose3d::backward(const Tensor& grad_out) {
  const auto g = conv_geometry(out_, out_shape_[2], out_shape_[3], out_shape_[4], kernel_, stride_, padding_);
  Tensor grad_in(input_.shape());
  AlignedBuffer col(static_cast<size_t>(g.rows() * g.cols()));
  ConstMatMap w(weight_.value.data(), in_, g.rows());
  MatMap dw(weight_.grad.data(), in_, g.rows());
  const int64_t out_size = out_ * g.d * g.h * g.w;
  for (int64_t n = 0; n < input_.dim(0); ++n) {
    const double* gy = grad_out.data() + n * out_size;
    vol2col(gy, g, col.data());
    ConstMatMap dcol(col.data(), g.rows(), g.cols());
    ConstMatMap xn(input_.data() + n * in_ * g.cols(), in_, g.cols());
    MatMap(grad_in.data() + n * in_ * g.cols(), in_, g.cols()).noalias() = w * dcol;
    dw.noalias() += xn * dcol.transpose();
    if (has_bias_) {
      const int64_t plane = g.d * g.h * g.w;
      for (int64_t o = 0; o < out_; ++o) {
        double acc = 0.0;
        for (int64_t i = 0; i < plane; ++i) acc += gy[o * plane + i];
        bias_.grad[o] += acc;
      }
    }
  }
  return grad_in;
}

void ConvTranspose3d::collect(const std::string& prefix, NamedParams& params, NamedBuffers&) {
  params.emplace_back(prefix + "weight", &weight_);
  if (has_bias_) params.emplace_back(prefix + "bias", &bias_);
}

// ---------------------------------------------------------------------------
// BatchNorm3d

BatchNorm3d::BatchNorm3d(int64_t channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum), gamma_({channels}), beta_({channels}),
      running_mean_({channels}, 0.0), running_var_({channels}, 1.0) {
  gamma_.value.fill(1.0);
}

Tensor BatchNorm3d::forward(const Tensor& x, Mode mode) {
  require_5d(x.shape(), "BatchNorm3d");
  if (x.dim(1) != channels_) throw ConfigError("BatchNorm3d channel mismatch");
  const int64_t n = x.dim(0);
  const int64_t plane = x.dim(2) * x.dim(3) * x.dim(4);
  const int64_t m = n * plane;
  last_mode_ = mode;
  xhat_ = Tensor(x.shape());
  Tensor y(x.shape());
  inv_std_.assign(static_cast<size_t>(channels_), 0.0);
  for (int64_t c = 0; c < channels_; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::kTrain) {
      for (int64_t b = 0; b < n; ++b) {
        const double* p = x.data() + (b * channels_ + c) * plane;
        for (int64_t i = 0; i < plane; ++i) mean += p[i];
      }
      mean /= static_cast<double>(m);
      for (int64_t b = 0; b < n; ++b) {
        const double* p = x.data() + (b * channels_ + c) * plane;
        for (int64_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= static_cast<double>(m);
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      running_mean_[c] = (1 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] = (1 - momentum_) * running_var_[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[static_cast<size_t>(c)] = inv;
    for (int64_t b = 0; b < n; ++b) {
      const int64_t off = (b * channels_ + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double xh = (x[off + i] - mean) * inv;
        xhat_[off + i] = xh;
        y[off + i] = gamma_.value[c] * xh + beta_.value[c];
      }
    }
  }
  return y;
}

Tensor BatchNorm3d::backward(const Tensor& grad_out) {
  const int64_t n = xhat_.dim(0);
  const int64_t plane = xhat_.dim(2) * xhat_.dim(3) * xhat_.dim(4);
  const double m = static_cast<double>(n * plane);
  Tensor grad_in(xhat_.shape());
  for (int64_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int64_t b = 0; b < n; ++b) {
      const int64_t off = (b * channels_ + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        sum_dy += grad_out[off + i];
        sum_dy_xhat += grad_out[off + i] * xhat_[off + i];
      }
    }
    gamma_.grad[c] += sum_dy_xhat;
    beta_.grad[c] += sum_dy;
    const double scale = gamma_.value[c] * inv_std_[static_cast<size_t>(c)];
    for (int64_t b = 0; b < n; ++b) {
      const int64_t off = (b * channels_ + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        if (last_mode_ == Mode::kTrain) {
          grad_in[off + i] = scale * (grad_out[off + i] - sum_dy / m - xhat_[off + i] * sum_dy_xhat / m);
        } else {
          grad_in[off + i] = scale * grad_out[off + i];
        }
      }
    }
  }
  return grad_in;
}

void BatchNorm3d::collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) {
  params.emplace_back(prefix + "weight", &gamma_);
  params.emplace_back(prefix + "bias", &beta_);
  buffers.emplace_back(prefix + "running_mean", &running_mean_);
  buffers.emplace_back(prefix + "running_var", &running_var_);
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::forward(const Tensor& x, Mode) {
  output_ = x;
  for (double& v : output_.values()) v = v > 0.0 ? v : 0.0;
  return output_;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (int64_t i = 0; i < g.numel(); ++i) {
    if (!(output_[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

// ---------------------------------------------------------------------------
// MaxPool3d

MaxPool3d::MaxPool3d(Dims3 stride) : stride_(stride) {
  for (int64_t s : stride_) {
    if (s < 1) throw ConfigError("pool stride must be positive");
  }
}

Shape MaxPool3d::output_shape(const Shape& input) const {
  require_5d(input, "MaxPool3d");
  Shape out = input;
  for (int i = 0; i < 3; ++i) out[2 + i] = (input[2 + i] + stride_[i] - 1) / stride_[i];
  return out;
}

Tensor MaxPool3d::forward(const Tensor& x, Mode) {
  const Shape out_shape = output_shape(x.shape());
  input_shape_ = x.shape();
  Tensor y(out_shape);
  argmax_.assign(static_cast<size_t>(y.numel()), 0);
  const int64_t d = x.dim(2), h = x.dim(3), w = x.dim(4);
  const int64_t od = out_shape[2], oh = out_shape[3], ow = out_shape[4];
  int64_t o = 0;
  for (int64_t plane = 0; plane < x.dim(0) * x.dim(1); ++plane) {
    const int64_t base = plane * d * h * w;
    for (int64_t z = 0; z < od; ++z) {
      for (int64_t yy = 0; yy < oh; ++yy) {
        for (int64_t xx = 0; xx < ow; ++xx, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_idx = -1;
          for (int64_t iz = z * stride_[0]; iz < std::min(d, (z + 1) * stride_[0]); ++iz) {
            for (int64_t iy = yy * stride_[1]; iy < std::min(h, (yy + 1) * stride_[1]); ++iy) {
              for (int64_t ix = xx * stride_[2]; ix < std::min(w, (xx + 1) * stride_[2]); ++ix) {
                const int64_t idx = base + (iz * h + iy) * w + ix;
                if (best_idx < 0 || x[idx] > best) {
                  best = x[idx];
                  best_idx = idx;
                }
              }
            }
          }
          y[o] = best;
          argmax_[static_cast<size_t>(o)] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool3d::backward(const Tensor& grad_out) {
  Tensor grad_in(input_shape_);
  for (int64_t o = 0; o < grad_out.numel(); ++o) grad_in[argmax_[static_cast<size_t>(o)]] += grad_out[o];
  return grad_in;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Shape GlobalAvgPool::output_shape(const Shape& input) const {
  require_5d(input, "GlobalAvgPool");
  return {input[0], input[1]};
}

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  input_shape_ = x.shape();
  Tensor y(output_shape(x.shape()));
  const int64_t plane = x.dim(2) * x.dim(3) * x.dim(4);
  for (int64_t i = 0; i < y.numel(); ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < plane; ++j) acc += x[i * plane + j];
    y[i] = acc / static_cast<double>(plane);
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor grad_in(input_shape_);
  const int64_t plane = input_shape_[2] * input_shape_[3] * input_shape_[4];
  for (int64_t i = 0; i < grad_out.numel(); ++i) {
    const double g = grad_out[i] / static_cast<double>(plane);
    for (int64_t j = 0; j < plane; ++j) grad_in[i * plane + j] = g;
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int64_t in_features, int64_t out_features, std::mt19937_64& rng)
    : in_(in_features), out_(out_features), weight_({out_features, in_features}), bias_({out_features}) {
  if (in_features < 1 || out_features < 1) throw ConfigError("linear layer sizes must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : weight_.value.values()) v = dist(rng);
  for (double& v : bias_.value.values()) v = dist(rng);
}

Shape Linear::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != in_) {
    throw ConfigError("Linear expects (N," + std::to_string(in_) + "), got " + shape_str(input));
  }
  return {input[0], out_};
}

Tensor Linear::forward(const Tensor& x, Mode) {
  Tensor y(output_shape(x.shape()));
  input_ = x;
  ConstMatMap xm(x.data(), x.dim(0), in_);
  ConstMatMap w(weight_.value.data(), out_, in_);
  MatMap ym(y.data(), x.dim(0), out_);
  ym.noalias() = xm * w.transpose();
  for (int64_t b = 0; b < x.dim(0); ++b) {
    for (int64_t o = 0; o < out_; ++o) ym(b, o) += bias_.value[o];
  }
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  Tensor grad_in(input_.shape());
  ConstMatMap gy(grad_out.data(), input_.dim(0), out_);
  ConstMatMap xm(input_.data(), input_.dim(0), in_);
  ConstMatMap w(weight_.value.data(), out_, in_);
  MatMap(weight_.grad.data(), out_, in_).noalias() += gy.transpose() * xm;
  for (int64_t b = 0; b < input_.dim(0); ++b) {
    for (int64_t o = 0; o < out_; ++o) bias_.grad[o] += gy(b, o);
  }
  MatMap(grad_in.data(), input_.dim(0), in_).noalias() = gy * w;
  return grad_in;
}

void Linear::collect(const std::string& prefix, NamedParams& params, NamedBuffers&) {
  params.emplace_back(prefix + "weight", &weight_);
  params.emplace_back(prefix + "bias", &bias_);
}

// ---------------------------------------------------------------------------
// Resize3d

Shape Resize3d::output_shape(const Shape& input) const {
  require_5d(input, "Resize3d");
  return {input[0], input[1], target_[0], target_[1], target_[2]};
}

Tensor Resize3d::forward(const Tensor& x, Mode) {
  input_shape_ = x.shape();
  return trilinear_resize(x, target_[0], target_[1], target_[2]);
}

Tensor Resize3d::backward(const Tensor& grad_out) { return trilinear_resize_backward(grad_out, input_shape_); }

// ---------------------------------------------------------------------------
// Sequential / Residual

Sequential& Sequential::add(std::string name, LayerPtr layer) {
  layers_.emplace_back(std::move(name), std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& [name, layer] : layers_) h = layer->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

void Sequential::collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) {
  for (auto& [name, layer] : layers_) layer->collect(prefix + name + ".", params, buffers);
}

Shape Sequential::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& [name, layer] : layers_) s = layer->output_shape(s);
  return s;
}

Residual::Residual(std::unique_ptr<Sequential> branch, LayerPtr projection)
    : branch_(std::move(branch)), projection_(std::move(projection)) {}

Tensor Residual::forward(const Tensor& x, Mode mode) {
  Tensor y = branch_->forward(x, mode);
  if (projection_) {
    y += projection_->forward(x, mode);
  } else {
    y += x;
  }
  return relu_.forward(y, mode);
}

Tensor Residual::backward(const Tensor& grad_out) {
  const Tensor g = relu_.backward(grad_out);
  Tensor gx = branch_->backward(g);
  if (projection_) {
    gx += projection_->backward(g);
  } else {
    gx += g;
  }
  return gx;
}

void Residual::collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) {
  branch_->collect(prefix + "branch.", params, buffers);
  if (projection_) projection_->collect(prefix + "shortcut.", params, buffers);
}

Shape Residual::output_shape(const Shape& input) const {
  const Shape out = branch_->output_shape(input);
  const Shape shortcut = projection_ ? projection_->output_shape(input) : input;
  if (out != shortcut) throw ConfigError("residual branch and shortcut shapes differ");
  return out;
}

NamedParams parameters_of(Layer& layer, const std::string& prefix) {
  NamedParams params;
  NamedBuffers buffers;
  layer.collect(prefix, params, buffers);
  return params;
}

int64_t parameter_count(Layer& layer) {
  int64_t n = 0;
  for (const auto& [name, p] : parameters_of(layer)) n += p->value.numel();
  return n;
}

}  // namespace prp::nn
