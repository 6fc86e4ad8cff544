#include "prp/losses.hpp"

#include <algorithm>
#include <cmath>

#include "prp/errors.hpp"

namespace prp::losses {

void LossWeights::validate() const {
  if (lambda_d < 0 || lambda_g < 0) throw ConfigError("loss weights must be >= 0");
  if (lambda_d == 0 && lambda_g == 0) throw ConfigError("loss weights lambda_d and lambda_g cannot both be zero");
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw InputError("softmax expects (N, C) logits, got " + shape_str(logits.shape()));
  const int64_t n = logits.dim(0), c = logits.dim(1);
  Tensor p(logits.shape());
  for (int64_t i = 0; i < n; ++i) {
    double mx = logits[i * c];
    for (int64_t k = 1; k < c; ++k) mx = std::max(mx, logits[i * c + k]);
    double z = 0.0;
    for (int64_t k = 0; k < c; ++k) {
      p[i * c + k] = std::exp(logits[i * c + k] - mx);
      z += p[i * c + k];
    }
    for (int64_t k = 0; k < c; ++k) p[i * c + k] /= z;
  }
  return p;
}

namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw InputError("expected (N, C) logits, got " + shape_str(logits.shape()));
  if (static_cast<int64_t>(labels.size()) != logits.dim(0)) throw InputError("label count differs from batch size");
  for (int label : labels) {
    if (label < 0 || label >= logits.dim(1)) {
      throw InputError("label " + std::to_string(label) + " outside [0, " + std::to_string(logits.dim(1)) + ")");
    }
  }
}

}  // namespace

LossWithGrad discriminative_loss(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const int64_t n = logits.dim(0), c = logits.dim(1);
  constexpr double kLogFloor = 1e-12;
  LossWithGrad out;
  out.grad = softmax(logits);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t y = labels[static_cast<size_t>(i)];
    // log p_y directly from the stabilized logits keeps precision when p_y is close to 1.
    double mx = logits[i * c];
    for (int64_t k = 1; k < c; ++k) mx = std::max(mx, logits[i * c + k]);
    double z = 0.0;
    for (int64_t k = 0; k < c; ++k) z += std::exp(logits[i * c + k] - mx);
    const double log_p = std::max(logits[i * c + y] - mx - std::log(z), std::log(kLogFloor));
    out.value -= log_p;
    out.grad[i * c + y] -= 1.0;
  }
  out.value /= static_cast<double>(n);
  out.grad *= 1.0 / static_cast<double>(n);
  return out;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const int64_t n = logits.dim(0), c = logits.dim(1);
  int64_t hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * c;
    const int64_t arg = std::max_element(row, row + c) - row;
    if (arg == labels[static_cast<size_t>(i)]) ++hits;
  }
  return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
}

LossWithGrad generative_loss(const Tensor& y, const Tensor& g, const Tensor& m) {
  if (y.shape() != g.shape()) {
    throw InputError("prediction shape " + shape_str(y.shape()) + " differs from ground truth " + shape_str(g.shape()));
  }
  if (y.rank() != 5) throw InputError("generative loss expects (N, C, T, H, W) clips");
  const int64_t n = y.dim(0), c = y.dim(1);
  const int64_t plane = y.dim(2) * y.dim(3) * y.dim(4);
  const Shape m5{n, 1, y.dim(2), y.dim(3), y.dim(4)};
  const Shape m4{n, y.dim(2), y.dim(3), y.dim(4)};
  if (m.shape() != m5 && m.shape() != m4) {
    throw InputError("attention shape " + shape_str(m.shape()) + " does not broadcast onto " + shape_str(y.shape()));
  }
  const double per_sample = static_cast<double>(c * plane);
  LossWithGrad out;
  out.grad = Tensor(y.shape());
  for (int64_t b = 0; b < n; ++b) {
    double acc = 0.0;
    for (int64_t k = 0; k < c; ++k) {
      const int64_t off = (b * c + k) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double w = m[b * plane + i];
        const double d = y[off + i] - g[off + i];
        acc += w * d * d;
        out.grad[off + i] = 2.0 * w * d / (per_sample * static_cast<double>(n));
      }
    }
    out.value += acc / per_sample;
  }
  out.value /= static_cast<double>(n);
  return out;
}

double joint_loss(double l_d, double l_g, const LossWeights& w) { return w.lambda_d * l_d + w.lambda_g * l_g; }

}  // namespace prp::losses
