#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "prp/tensor.hpp"

namespace prp::nn {

using Dims3 = std::array<int64_t, 3>;

enum class Mode { kTrain, kEval };

struct Parameter {
  Tensor value;
  Tensor grad;

  explicit Parameter(Shape shape = {}) : value(shape), grad(shape) {}
  void zero_grad() { grad.fill(0.0); }
};

using NamedParams = std::vector<std::pair<std::string, Parameter*>>;
using NamedBuffers = std::vector<std::pair<std::string, Tensor*>>;

/// A differentiable stage. forward() caches what backward() needs, so one
/// forward must precede each backward and layers are not reentrant.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  /// Returns dL/dx and accumulates dL/dparams.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) {}
  /// Shape produced for a given input shape, without computing anything.
  virtual Shape output_shape(const Shape& input) const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv3d : public Layer {
 public:
  Conv3d(int64_t in_channels, int64_t out_channels, Dims3 kernel, Dims3 stride, Dims3 padding, bool bias,
         std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) override;
  Shape output_shape(const Shape& input) const override;

  Parameter& weight() { return weight_; }
  Parameter* bias() { return has_bias_ ? &bias_ : nullptr; }

 private:
  int64_t in_, out_;
  Dims3 kernel_, stride_, padding_;
  bool has_bias_;
  Parameter weight_, bias_;
  Tensor input_;
};

/// Transposed 3D convolution; output extent is (in - 1) * stride - 2 * padding + kernel.
class ConvTranspose3d : public Layer {
 public:
  ConvTranspose3d(int64_t in_channels, int64_t out_channels, Dims3 kernel, Dims3 stride, Dims3 padding, bool bias,
                  std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) override;
  Shape output_shape(const Shape& input) const override;

 private:
  int64_t in_, out_;
  Dims3 kernel_, stride_, padding_;
  bool has_bias_;
  Parameter weight_, bias_;
  Tensor input_;
  Shape out_shape_;
};

/// Per-channel normalization over (N, D, H, W): batch statistics in training, running statistics in eval.
class BatchNorm3d : public Layer {
 public:
  explicit BatchNorm3d(int64_t channels, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) override;
  Shape output_shape(const Shape& input) const override { return input; }

 private:
  int64_t channels_;
  double eps_, momentum_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  Mode last_mode_ = Mode::kTrain;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& input) const override { return input; }

 private:
  Tensor output_;
};

/// Max pooling with kernel == stride and ceil-mode output sizing.
class MaxPool3d : public Layer {
 public:
  explicit MaxPool3d(Dims3 stride);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& input) const override;

 private:
  Dims3 stride_;
  Shape input_shape_;
  std::vector<int64_t> argmax_;
};

/// (N, C, D, H, W) -> (N, C) mean.
class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& input) const override;

 private:
  Shape input_shape_;
};

class Linear : public Layer {
 public:
  Linear(int64_t in_features, int64_t out_features, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) override;
  Shape output_shape(const Shape& input) const override;

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int64_t in_, out_;
  Parameter weight_, bias_;
  Tensor input_;
};

/// Parameter-free trilinear resize of the trailing three axes.
class Resize3d : public Layer {
 public:
  explicit Resize3d(Dims3 target) : target_(target) {}

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& input) const override;

 private:
  Dims3 target_;
  Shape input_shape_;
};

class Sequential : public Layer {
 public:
  Sequential& add(std::string name, LayerPtr layer);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) override;
  Shape output_shape(const Shape& input) const override;

  size_t size() const { return layers_.size(); }
  Layer& at(size_t i) { return *layers_.at(i).second; }

 private:
  std::vector<std::pair<std::string, LayerPtr>> layers_;
};

/// relu(branch(x) + shortcut(x)); the shortcut is identity or a 1x1x1 projection.
class Residual : public Layer {
 public:
  Residual(std::unique_ptr<Sequential> branch, LayerPtr projection);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, NamedParams& params, NamedBuffers& buffers) override;
  Shape output_shape(const Shape& input) const override;

  Sequential& branch() { return *branch_; }

 private:
  std::unique_ptr<Sequential> branch_;
  LayerPtr projection_;
  ReLU relu_;
};

NamedParams parameters_of(Layer& layer, const std::string& prefix = "");
int64_t parameter_count(Layer& layer);

}  // namespace prp::nn
