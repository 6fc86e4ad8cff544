#pragma once

// Central finite-difference checks for layers and scalar objectives.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "prp/layers.hpp"
#include "prp/tensor.hpp"

namespace prp::test {

struct GradCheck {
  double max_rel_err = 0.0;
  int checked = 0;
};

/// Compares analytic and numeric derivatives of `objective` with respect to entries of `values`.
/// `analytic[i]` must already hold the analytic derivative for values[i].
inline void compare_entries(GradCheck& out, std::span<double> values, std::span<const double> analytic,
                            const std::function<double()>& objective, int samples, std::mt19937_64& rng,
                            double eps = 1e-5, double floor = 1e-6) {
  if (values.empty()) return;
  std::uniform_int_distribution<size_t> pick(0, values.size() - 1);
  for (int k = 0; k < samples; ++k) {
    const size_t i = samples >= static_cast<int>(values.size()) ? static_cast<size_t>(k) % values.size() : pick(rng);
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = objective();
    values[i] = saved - eps;
    const double down = objective();
    values[i] = saved;
    const double numeric = (up - down) / (2 * eps);
    const double err = std::abs(numeric - analytic[i]) / std::max({floor, std::abs(numeric), std::abs(analytic[i])});
    out.max_rel_err = std::max(out.max_rel_err, err);
    ++out.checked;
  }
}

/// Objective <layer(x), g> with a fixed random g; checks d/dx and d/dparams.
inline GradCheck check_layer(nn::Layer& layer, Tensor x, nn::Mode mode, int samples, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  const Tensor y0 = layer.forward(x, mode);
  Tensor g(y0.shape());
  for (auto& v : g.values()) v = n(rng);

  auto objective = [&]() {
    const Tensor y = layer.forward(x, mode);
    double s = 0;
    for (int64_t i = 0; i < y.numel(); ++i) s += y[i] * g[i];
    return s;
  };
  auto params = nn::parameters_of(layer);
  for (auto& [name, p] : params) p->zero_grad();
  layer.forward(x, mode);
  const Tensor dx = layer.backward(g);

  GradCheck out;
  compare_entries(out, x.values(), dx.values(), objective, samples, rng);
  for (auto& [name, p] : params) {
    const Tensor analytic = p->grad;
    compare_entries(out, p->value.values(), analytic.values(), objective, samples, rng);
  }
  return out;
}

inline Tensor random_tensor(Shape shape, uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = n(rng);
  return t;
}

}  // namespace prp::test
