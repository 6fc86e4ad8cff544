#include "prp/attention.hpp"

#include <algorithm>

#include "prp/errors.hpp"

namespace prp::attention {

void AttentionParams::validate() const {
  if (!(lambda1 >= 0.0 && lambda1 <= 1.0)) throw ConfigError("attention.lambda1 must lie in [0, 1]");
  if (!(lambda2 >= 1.0)) throw ConfigError("attention.lambda2 must be >= 1");
  for (int i = 0; i < 3; ++i) {
    if (pool_kernel[i] < 1) throw ConfigError("attention.pool_kernel entries must be positive");
    if (pool_stride[i] < 1) throw ConfigError("attention.pool_stride entries must be positive");
  }
}

Tensor frame_difference(const video::FrameSeq& frames) {
  if (frames.count() < 2) throw InputError("frame difference needs at least 2 frames");
  const int64_t h = frames.height(), w = frames.width(), c = frames.channels();
  Tensor out({frames.count() - 1, h, w});
  double* dst = out.data();
  for (int64_t t = 0; t + 1 < frames.count(); ++t) {
    auto a = frames.frame(t);
    auto b = frames.frame(t + 1);
    for (int64_t p = 0; p < h * w; ++p) {
      double acc = 0.0;
      for (int64_t k = 0; k < c; ++k) {
        const double d = static_cast<double>(a[static_cast<size_t>(p * c + k)]) - b[static_cast<size_t>(p * c + k)];
        acc += d * d;
      }
      dst[t * h * w + p] = acc / static_cast<double>(c);
    }
  }
  return out;
}

Tensor pool3d_average(const Tensor& maps, const Dims3& kernel, const Dims3& stride) {
  if (maps.rank() != 3) throw InputError("pool3d_average expects a (D,H,W) tensor, got " + shape_str(maps.shape()));
  for (int i = 0; i < 3; ++i) {
    if (kernel[i] < 1 || stride[i] < 1) throw ConfigError("pooling kernel and stride must be positive");
    if (maps.dim(i) < 1) throw InputError("pooling input dims must be >= 1");
  }
  Dims3 in{maps.dim(0), maps.dim(1), maps.dim(2)};
  Dims3 padded{}, out{};
  for (int i = 0; i < 3; ++i) {
    padded[i] = std::max(in[i], kernel[i]);
    out[i] = (padded[i] - kernel[i]) / stride[i] + 1;
  }
  Tensor result({out[0], out[1], out[2]});
  const double norm = 1.0 / static_cast<double>(kernel[0] * kernel[1] * kernel[2]);
  auto src = [&](int64_t z, int64_t y, int64_t x) {
    z = std::min(z, in[0] - 1);
    y = std::min(y, in[1] - 1);
    x = std::min(x, in[2] - 1);
    return maps[(z * in[1] + y) * in[2] + x];
  };
  for (int64_t oz = 0; oz < out[0]; ++oz) {
    for (int64_t oy = 0; oy < out[1]; ++oy) {
      for (int64_t ox = 0; ox < out[2]; ++ox) {
        double acc = 0.0;
        for (int64_t kz = 0; kz < kernel[0]; ++kz) {
          for (int64_t ky = 0; ky < kernel[1]; ++ky) {
            for (int64_t kx = 0; kx < kernel[2]; ++kx) {
              acc += src(oz * stride[0] + kz, oy * stride[1] + ky, ox * stride[2] + kx);
            }
          }
        }
        result[(oz * out[1] + oy) * out[2] + ox] = acc * norm;
      }
    }
  }
  return result;
}

Tensor activate(const Tensor& maps, double lambda1, double lambda2) {
  Tensor out = maps;
  if (maps.empty()) return out;
  const double lo = maps.min();
  const double hi = maps.max();
  if (!(hi > lo)) {
    out.fill(1.0);
    return out;
  }
  const double scale = (lambda2 - lambda1) / (hi - lo);
  for (double& v : out.values()) v = std::clamp(scale * (v - lo) + lambda1, lambda1, lambda2);
  return out;
}

Tensor upsample3d(const Tensor& maps, const Dims3& target) {
  if (maps.rank() != 3) throw InputError("upsample3d expects a (D,H,W) tensor, got " + shape_str(maps.shape()));
  for (int64_t d : target) {
    if (d < 1) throw ConfigError("upsample target dims must be >= 1");
  }
  const Tensor as5d = maps.reshaped({1, 1, maps.dim(0), maps.dim(1), maps.dim(2)});
  return trilinear_resize(as5d, target[0], target[1], target[2]).reshaped({target[0], target[1], target[2]});
}

AttentionMap motion_attention(const video::FrameSeq& frames, const AttentionParams& params, const Dims3& target) {
  params.validate();
  const Tensor diff = frame_difference(frames);
  const Tensor pooled = pool3d_average(diff, params.pool_kernel, params.pool_stride);
  const Tensor activated = activate(pooled, params.lambda1, params.lambda2);
  return {upsample3d(activated, target)};
}

}  // namespace prp::attention
