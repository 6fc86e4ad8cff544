#include "prp/optim.hpp"

#include <cmath>

namespace prp::optim {

void Sgd::step(const nn::NamedParams& params) {
  double scale = 1.0;
  if (options_.grad_clip > 0) {
    double sq = 0.0;
    for (const auto& [name, p] : params) {
      for (double g : p->grad.values()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > options_.grad_clip) scale = options_.grad_clip / norm;
  }
  for (const auto& [name, p] : params) {
    auto it = buffers_.find(name);
    const bool fresh = it == buffers_.end();
    if (fresh) it = buffers_.emplace(name, Tensor(p->value.shape())).first;
    Tensor& v = it->second;
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      const double d = scale * p->grad[i] + options_.weight_decay * p->value[i];
      v[i] = fresh ? d : options_.momentum * v[i] + d;
      p->value[i] -= options_.learning_rate * v[i];
    }
  }
}

}  // namespace prp::optim
