#pragma once

#include <array>
#include <cstdint>

#include "prp/tensor.hpp"
#include "prp/video.hpp"

namespace prp::attention {

/// (t, h, w) triple.
using Dims3 = std::array<int64_t, 3>;

struct AttentionParams {
  double lambda1 = 0.8;
  double lambda2 = 2.0;
  Dims3 pool_kernel{15, 28, 28};
  Dims3 pool_stride{16, 7, 7};

  void validate() const;
};

/// Single-channel weights shaped (T, H, W) like the ground-truth clip; broadcast over color channels.
struct AttentionMap {
  Tensor weights;
};

/// D^t = |R^t - R^(t+1)|^2, averaged over color channels. Returns (T-1, H, W).
Tensor frame_difference(const video::FrameSeq& frames);

/// 3D average pooling with floor sizing. Axes shorter than the kernel are
/// replicate-padded at the end up to the kernel size.
Tensor pool3d_average(const Tensor& maps, const Dims3& kernel, const Dims3& stride);

/// Global affine rescale to [lambda1, lambda2]; a constant input maps to 1.0 everywhere.
Tensor activate(const Tensor& maps, double lambda1, double lambda2);

/// Trilinear, corner-aligned resampling of a (D, H, W) tensor to `target`.
Tensor upsample3d(const Tensor& maps, const Dims3& target);

/// U(A(P(D(R)))) resampled to `target` = (T_g, H, W).
AttentionMap motion_attention(const video::FrameSeq& frames, const AttentionParams& params, const Dims3& target);

}  // namespace prp::attention
