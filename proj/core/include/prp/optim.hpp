#pragma once

#include <map>
#include <string>

#include "prp/layers.hpp"

namespace prp::optim {

struct SgdOptions {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  /// Global L2 gradient-norm cap; <= 0 disables clipping.
  double grad_clip = 0.0;
};

/// SGD with heavy-ball momentum and L2 weight decay:
///   d = grad + wd * p;  v = mu * v + d  (v = d on the first step);  p -= lr * v.
class Sgd {
 public:
  explicit Sgd(SgdOptions options) : options_(options) {}

  void step(const nn::NamedParams& params);
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  const SgdOptions& options() const { return options_; }

  const std::map<std::string, Tensor>& momentum_buffers() const { return buffers_; }
  void load_momentum_buffers(std::map<std::string, Tensor> buffers) { buffers_ = std::move(buffers); }

 private:
  SgdOptions options_;
  std::map<std::string, Tensor> buffers_;
};

}  // namespace prp::optim
