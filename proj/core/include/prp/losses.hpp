#pragma once

#include <span>
#include <vector>

#include "prp/tensor.hpp"

namespace prp::losses {

struct LossWeights {
  double lambda_d = 0.1;
  double lambda_g = 1.0;

  void validate() const;
};

struct LossReport {
  double l_d = 0.0;
  double l_g = 0.0;
  double joint = 0.0;
  double dp_accuracy = 0.0;
};

struct LossWithGrad {
  double value = 0.0;
  Tensor grad;  // d value / d input
};

/// Row-wise softmax of (N, C) logits, stabilized by max subtraction.
Tensor softmax(const Tensor& logits);

/// Mean cross-entropy of (N, C) logits against class labels, with gradient w.r.t. the logits.
LossWithGrad discriminative_loss(const Tensor& logits, std::span<const int> labels);

/// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& logits, std::span<const int> labels);

/// Attention-weighted MSE. `y` and `g` are (N, C, T, H, W); `m` is (N, 1, T, H, W) or
/// (N, T, H, W) and is broadcast over channels. Each sample's squared errors are averaged over
/// its C*T*H*W elements, then samples are averaged. The weights receive no gradient.
LossWithGrad generative_loss(const Tensor& y, const Tensor& g, const Tensor& m);

double joint_loss(double l_d, double l_g, const LossWeights& w);

}  // namespace prp::losses
