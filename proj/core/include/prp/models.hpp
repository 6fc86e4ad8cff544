#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>

#include "prp/layers.hpp"
#include "prp/tensor.hpp"
#include "prp/video.hpp"

namespace prp::models {

using nn::Dims3;
using nn::Mode;

enum class Variant { kC3D, kR3D, kR2plus1D };

std::string to_string(Variant variant);
Variant parse_variant(const std::string& name);

/// (frames, height, width, channels) of one input clip.
struct ClipShape {
  int64_t frames = 16;
  int64_t height = 112;
  int64_t width = 112;
  int64_t channels = 3;

  bool operator==(const ClipShape&) const = default;
};

struct BackboneConfig {
  Variant variant = Variant::kC3D;
  std::array<int64_t, 5> block_channels{64, 128, 256, 512, 512};
  Dims3 conv_kernel{3, 3, 3};
  std::array<int64_t, 5> temporal_pool_strides{1, 2, 2, 2, 1};
  int64_t spatial_pool_stride = 2;
  ClipShape input_shape;

  void validate() const;
  int64_t feature_dim() const { return block_channels[4]; }
  int64_t temporal_downsampling() const;
};

/// Four deconvolution blocks; the first three stride (2,2,2), the fourth (r,2,2).
struct DecoderConfig {
  std::array<int64_t, 4> block_channels{256, 128, 64, 3};
  int recon_rate = 2;

  void validate() const;
  Dims3 stride(int block) const;
};

/// Kernel/padding used for a transposed conv so that its output is exactly in * stride.
std::pair<int64_t, int64_t> deconv_kernel_padding(int64_t stride);

/// Middle width of a factorized (2+1)D conv, chosen to roughly match a full 3D conv's parameters.
int64_t r2plus1d_mid_channels(int64_t in, int64_t out, const Dims3& kernel);

/// conv -> batch norm -> ReLU.
std::unique_ptr<nn::Sequential> make_c3d_block(int64_t in, int64_t out, const Dims3& kernel, std::mt19937_64& rng);
/// Two convs (full 3D for R3D, spatial-then-temporal for R(2+1)D) with an identity or 1x1x1 shortcut.
std::unique_ptr<nn::Residual> make_residual_block(int64_t in, int64_t out, const Dims3& kernel, bool factorized,
                                                  std::mt19937_64& rng);

std::unique_ptr<nn::Sequential> build_encoder(const BackboneConfig& cfg, std::mt19937_64& rng);
std::unique_ptr<nn::Sequential> build_decoder(const BackboneConfig& backbone, const DecoderConfig& cfg,
                                              std::mt19937_64& rng);

/// conv5 activation shape for a batch of `batch` clips, by size arithmetic only.
Shape conv5_shape(const BackboneConfig& cfg, int64_t batch = 1);
/// Decoder output shape for a batch, by size arithmetic only.
Shape decoded_shape(const BackboneConfig& backbone, const DecoderConfig& cfg, int64_t batch = 1);

/// Packs clips (T x H x W x C each) into an (N, C, T, H, W) tensor.
Tensor clips_to_tensor(std::span<const video::FrameSeq> clips);
Tensor clip_to_tensor(const video::FrameSeq& clip);

struct EncodeResult {
  Tensor feature_map;  // conv5 activations (N, C5, T5, H5, W5)
  Tensor feature_vec;  // global average of feature_map (N, C5)
};

using StateDict = std::map<std::string, Tensor>;

/// Encoder + playback-rate head + slow-down decoder.
class PrpModel {
 public:
  PrpModel(BackboneConfig backbone, DecoderConfig decoder, int num_rate_classes, uint64_t seed);

  EncodeResult encode(const Tensor& clips, Mode mode);
  Tensor classify_rate(const Tensor& feature_vec, Mode mode);
  Tensor decode(const Tensor& feature_map, Mode mode);

  /// Back-propagates through whichever heads were run since the last encode().
  /// Null gradients mean the corresponding head was not used.
  void backward(const Tensor* grad_logits, const Tensor* grad_recon);

  nn::NamedParams parameters();
  nn::NamedBuffers buffers();
  void zero_grad();

  StateDict state_dict();
  /// Loads every tensor whose key starts with `prefix`; throws ConfigError on shape mismatch or missing keys.
  void load_state_dict(const StateDict& state, bool strict = true);

  const BackboneConfig& backbone_config() const { return backbone_; }
  const DecoderConfig& decoder_config() const { return decoder_cfg_; }
  int num_rate_classes() const { return num_rate_classes_; }
  nn::Sequential& encoder() { return *encoder_; }

 private:
  BackboneConfig backbone_;
  DecoderConfig decoder_cfg_;
  int num_rate_classes_;
  std::unique_ptr<nn::Sequential> encoder_;
  nn::GlobalAvgPool gap_;
  std::unique_ptr<nn::Linear> rate_head_;
  std::unique_ptr<nn::Sequential> decoder_;
};

/// Encoder + action-class head, for fine-tuning and evaluation.
class ActionClassifier {
 public:
  ActionClassifier(BackboneConfig backbone, int num_classes, uint64_t seed);

  /// Copies "encoder.*" tensors from a pretraining state dict.
  void load_encoder(const StateDict& state);

  EncodeResult encode(const Tensor& clips, Mode mode);
  Tensor forward(const Tensor& clips, Mode mode);
  /// When `backbone` is false only the head receives gradients.
  void backward(const Tensor& grad_logits, bool backbone = true);

  nn::NamedParams parameters(bool include_backbone = true);
  nn::NamedBuffers buffers();
  void zero_grad();
  StateDict state_dict();
  void load_state_dict(const StateDict& state, bool strict = true);

  const BackboneConfig& backbone_config() const { return backbone_; }
  int num_classes() const { return num_classes_; }

 private:
  BackboneConfig backbone_;
  int num_classes_;
  std::unique_ptr<nn::Sequential> encoder_;
  nn::GlobalAvgPool gap_;
  std::unique_ptr<nn::Linear> head_;
};

}  // namespace prp::models
