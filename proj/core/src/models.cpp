#include "prp/models.hpp"

#include <algorithm>

#include "prp/errors.hpp"

namespace prp::models {

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kC3D:
      return "C3D";
    case Variant::kR3D:
      return "R3D";
    case Variant::kR2plus1D:
      return "R2plus1D";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  if (name == "C3D" || name == "c3d") return Variant::kC3D;
  if (name == "R3D" || name == "r3d") return Variant::kR3D;
  if (name == "R2plus1D" || name == "r2plus1d" || name == "R(2+1)D") return Variant::kR2plus1D;
  throw ConfigError("unknown backbone variant '" + name + "' (expected C3D, R3D or R2plus1D)");
}

void BackboneConfig::validate() const {
  for (int64_t c : block_channels) {
    if (c < 1) throw ConfigError("backbone.block_channels must be positive");
  }
  for (int64_t k : conv_kernel) {
    if (k < 1 || k % 2 == 0) throw ConfigError("backbone.conv_kernel entries must be odd and positive");
  }
  for (int64_t s : temporal_pool_strides) {
    if (s < 1) throw ConfigError("backbone.temporal_pool_strides must be positive");
  }
  if (spatial_pool_stride < 1) throw ConfigError("backbone.spatial_pool_stride must be positive");
  if (input_shape.frames < 1 || input_shape.height < 1 || input_shape.width < 1 || input_shape.channels < 1) {
    throw ConfigError("backbone.input_shape must be positive");
  }
}

int64_t BackboneConfig::temporal_downsampling() const {
  int64_t f = 1;
  for (int64_t s : temporal_pool_strides) f *= s;
  return f;
}

void DecoderConfig::validate() const {
  for (int64_t c : block_channels) {
    if (c < 1) throw ConfigError("decoder.block_channels must be positive");
  }
  if (recon_rate != 1 && recon_rate != 2 && recon_rate != 4) {
    throw ConfigError("decoder recon_rate must be one of 1, 2, 4");
  }
}

Dims3 DecoderConfig::stride(int block) const {
  if (block == 3) return {recon_rate, 2, 2};
  return {2, 2, 2};
}

std::pair<int64_t, int64_t> deconv_kernel_padding(int64_t stride) {
  if (stride == 1) return {3, 1};
  return {2 * stride, stride / 2};
}

int64_t r2plus1d_mid_channels(int64_t in, int64_t out, const Dims3& kernel) {
  const int64_t t = kernel[0];
  const int64_t kk = kernel[1] * kernel[2];
  return std::max<int64_t>(1, (t * kk * in * out) / (kk * in + t * out));
}

namespace {

Dims3 same_padding(const Dims3& k) { return {k[0] / 2, k[1] / 2, k[2] / 2}; }

/// Full 3D conv, or spatial (1,k,k) -> BN -> ReLU -> temporal (t,1,1) when factorized.
void add_conv(nn::Sequential& seq, const std::string& name, int64_t in, int64_t out, const Dims3& kernel,
              bool factorized, std::mt19937_64& rng) {
  if (!factorized) {
    seq.add(name, std::make_unique<nn::Conv3d>(in, out, kernel, Dims3{1, 1, 1}, same_padding(kernel), false, rng));
    return;
  }
  const int64_t mid = r2plus1d_mid_channels(in, out, kernel);
  const Dims3 spatial{1, kernel[1], kernel[2]};
  const Dims3 temporal{kernel[0], 1, 1};
  seq.add(name + "_s", std::make_unique<nn::Conv3d>(in, mid, spatial, Dims3{1, 1, 1}, same_padding(spatial), false, rng));
  seq.add(name + "_s_bn", std::make_unique<nn::BatchNorm3d>(mid));
  seq.add(name + "_s_relu", std::make_unique<nn::ReLU>());
  seq.add(name + "_t",
          std::make_unique<nn::Conv3d>(mid, out, temporal, Dims3{1, 1, 1}, same_padding(temporal), false, rng));
}

}  // namespace

std::unique_ptr<nn::Sequential> make_c3d_block(int64_t in, int64_t out, const Dims3& kernel, std::mt19937_64& rng) {
  auto block = std::make_unique<nn::Sequential>();
  add_conv(*block, "conv", in, out, kernel, false, rng);
  block->add("bn", std::make_unique<nn::BatchNorm3d>(out));
  block->add("relu", std::make_unique<nn::ReLU>());
  return block;
}

std::unique_ptr<nn::Residual> make_residual_block(int64_t in, int64_t out, const Dims3& kernel, bool factorized,
                                                  std::mt19937_64& rng) {
  auto branch = std::make_unique<nn::Sequential>();
  add_conv(*branch, "conv1", in, out, kernel, factorized, rng);
  branch->add("bn1", std::make_unique<nn::BatchNorm3d>(out));
  branch->add("relu1", std::make_unique<nn::ReLU>());
  add_conv(*branch, "conv2", out, out, kernel, factorized, rng);
  branch->add("bn2", std::make_unique<nn::BatchNorm3d>(out));
  nn::LayerPtr projection;
  if (in != out) {
    projection = std::make_unique<nn::Conv3d>(in, out, Dims3{1, 1, 1}, Dims3{1, 1, 1}, Dims3{0, 0, 0}, false, rng);
  }
  return std::make_unique<nn::Residual>(std::move(branch), std::move(projection));
}

std::unique_ptr<nn::Sequential> build_encoder(const BackboneConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  auto encoder = std::make_unique<nn::Sequential>();
  int64_t in = cfg.input_shape.channels;
  for (int i = 0; i < 5; ++i) {
    const int64_t out = cfg.block_channels[static_cast<size_t>(i)];
    auto stage = std::make_unique<nn::Sequential>();
    if (cfg.variant == Variant::kC3D) {
      stage->add("block", make_c3d_block(in, out, cfg.conv_kernel, rng));
    } else {
      stage->add("block", make_residual_block(in, out, cfg.conv_kernel, cfg.variant == Variant::kR2plus1D, rng));
    }
    stage->add("pool", std::make_unique<nn::MaxPool3d>(Dims3{cfg.temporal_pool_strides[static_cast<size_t>(i)],
                                                             cfg.spatial_pool_stride, cfg.spatial_pool_stride}));
    encoder->add("stage" + std::to_string(i + 1), std::move(stage));
    in = out;
  }
  return encoder;
}

std::unique_ptr<nn::Sequential> build_decoder(const BackboneConfig& backbone, const DecoderConfig& cfg,
                                              std::mt19937_64& rng) {
  backbone.validate();
  cfg.validate();
  auto decoder = std::make_unique<nn::Sequential>();
  int64_t in = backbone.feature_dim();
  for (int b = 0; b < 4; ++b) {
    const Dims3 stride = cfg.stride(b);
    Dims3 kernel{}, padding{};
    for (int a = 0; a < 3; ++a) std::tie(kernel[a], padding[a]) = deconv_kernel_padding(stride[a]);
    const bool last = b == 3;
    // The final block keeps the previous width through its deconv and projects to the output
    // channels with a plain conv, leaving the reconstruction unconstrained.
    const int64_t width = last ? in : cfg.block_channels[static_cast<size_t>(b)];
    auto block = std::make_unique<nn::Sequential>();
    block->add("deconv", std::make_unique<nn::ConvTranspose3d>(in, width, kernel, stride, padding, false, rng));
    block->add("deconv_bn", std::make_unique<nn::BatchNorm3d>(width));
    block->add("deconv_relu", std::make_unique<nn::ReLU>());
    if (!last) {
      block->add("c3d", make_c3d_block(width, width, backbone.conv_kernel, rng));
    } else {
      const Dims3& k = backbone.conv_kernel;
      block->add("out", std::make_unique<nn::Conv3d>(width, cfg.block_channels[3], k, Dims3{1, 1, 1},
                                                     Dims3{k[0] / 2, k[1] / 2, k[2] / 2}, true, rng));
    }
    decoder->add("block" + std::to_string(b + 1), std::move(block));
    in = width;
  }
  decoder->add("resize", std::make_unique<nn::Resize3d>(Dims3{int64_t{cfg.recon_rate} * backbone.input_shape.frames,
                                                              backbone.input_shape.height,
                                                              backbone.input_shape.width}));
  return decoder;
}

Shape conv5_shape(const BackboneConfig& cfg, int64_t batch) {
  std::mt19937_64 rng(0);
  auto encoder = build_encoder(cfg, rng);
  const auto& s = cfg.input_shape;
  return encoder->output_shape({batch, s.channels, s.frames, s.height, s.width});
}

Shape decoded_shape(const BackboneConfig& backbone, const DecoderConfig& cfg, int64_t batch) {
  std::mt19937_64 rng(0);
  auto decoder = build_decoder(backbone, cfg, rng);
  return decoder->output_shape(conv5_shape(backbone, batch));
}

Tensor clip_to_tensor(const video::FrameSeq& clip) {
  const int64_t t = clip.count(), h = clip.height(), w = clip.width(), c = clip.channels();
  Tensor out({c, t, h, w});
  for (int64_t f = 0; f < t; ++f) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        for (int64_t k = 0; k < c; ++k) out[((k * t + f) * h + y) * w + x] = clip.at(f, y, x, k);
      }
    }
  }
  return out;
}

Tensor clips_to_tensor(std::span<const video::FrameSeq> clips) {
  if (clips.empty()) throw InputError("no clips to pack");
  std::vector<Tensor> items;
  items.reserve(clips.size());
  for (const auto& clip : clips) {
    if (clip.count() != clips[0].count() || !clip.same_layout(clips[0])) {
      throw InputError("clips in a batch must share one shape");
    }
    items.push_back(clip_to_tensor(clip));
  }
  return Tensor::stack(items);
}

namespace {

void check_clip_shape(const Tensor& clips, const ClipShape& expected) {
  const Shape want{clips.rank() == 5 ? clips.dim(0) : 0, expected.channels, expected.frames, expected.height,
                   expected.width};
  if (clips.shape() != want) {
    throw InputError("clip batch shape " + shape_str(clips.shape()) + " does not match configured input " +
                     shape_str({expected.channels, expected.frames, expected.height, expected.width}));
  }
}

StateDict collect_state(const std::vector<std::pair<std::string, nn::Layer*>>& parts) {
  StateDict state;
  for (const auto& [prefix, layer] : parts) {
    nn::NamedParams params;
    nn::NamedBuffers buffers;
    layer->collect(prefix, params, buffers);
    for (const auto& [name, p] : params) state[name] = p->value;
    for (const auto& [name, b] : buffers) state[name] = *b;
  }
  return state;
}

void restore_state(const std::vector<std::pair<std::string, nn::Layer*>>& parts, const StateDict& state,
                   bool strict) {
  for (const auto& [prefix, layer] : parts) {
    nn::NamedParams params;
    nn::NamedBuffers buffers;
    layer->collect(prefix, params, buffers);
    auto load = [&](const std::string& name, Tensor& dst) {
      auto it = state.find(name);
      if (it == state.end()) {
        if (strict) throw ConfigError("checkpoint is missing tensor '" + name + "'");
        return;
      }
      if (it->second.shape() != dst.shape()) {
        throw ConfigError("tensor '" + name + "' has shape " + shape_str(it->second.shape()) + ", model expects " +
                          shape_str(dst.shape()));
      }
      dst = it->second;
    };
    for (const auto& [name, p] : params) load(name, p->value);
    for (const auto& [name, b] : buffers) load(name, *b);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// PrpModel

PrpModel::PrpModel(BackboneConfig backbone, DecoderConfig decoder, int num_rate_classes, uint64_t seed)
    : backbone_(std::move(backbone)), decoder_cfg_(std::move(decoder)), num_rate_classes_(num_rate_classes) {
  if (num_rate_classes < 2) throw ConfigError("the rate classifier needs at least 2 classes");
  std::mt19937_64 rng(seed);
  encoder_ = build_encoder(backbone_, rng);
  rate_head_ = std::make_unique<nn::Linear>(backbone_.feature_dim(), num_rate_classes, rng);
  decoder_ = build_decoder(backbone_, decoder_cfg_, rng);
}

EncodeResult PrpModel::encode(const Tensor& clips, Mode mode) {
  check_clip_shape(clips, backbone_.input_shape);
  EncodeResult r;
  r.feature_map = encoder_->forward(clips, mode);
  r.feature_vec = gap_.forward(r.feature_map, mode);
  return r;
}

Tensor PrpModel::classify_rate(const Tensor& feature_vec, Mode mode) { return rate_head_->forward(feature_vec, mode); }

Tensor PrpModel::decode(const Tensor& feature_map, Mode mode) { return decoder_->forward(feature_map, mode); }

void PrpModel::backward(const Tensor* grad_logits, const Tensor* grad_recon) {
  Tensor grad_map;
  if (grad_logits) grad_map = gap_.backward(rate_head_->backward(*grad_logits));
  if (grad_recon) {
    Tensor g = decoder_->backward(*grad_recon);
    if (grad_map.empty()) {
      grad_map = std::move(g);
    } else {
      grad_map += g;
    }
  }
  if (!grad_map.empty()) encoder_->backward(grad_map);
}

nn::NamedParams PrpModel::parameters() {
  nn::NamedParams params;
  nn::NamedBuffers buffers;
  encoder_->collect("encoder.", params, buffers);
  rate_head_->collect("rate_head.", params, buffers);
  decoder_->collect("decoder.", params, buffers);
  return params;
}

nn::NamedBuffers PrpModel::buffers() {
  nn::NamedParams params;
  nn::NamedBuffers buffers;
  encoder_->collect("encoder.", params, buffers);
  rate_head_->collect("rate_head.", params, buffers);
  decoder_->collect("decoder.", params, buffers);
  return buffers;
}

void PrpModel::zero_grad() {
  for (auto& [name, p] : parameters()) p->zero_grad();
}

StateDict PrpModel::state_dict() {
  return collect_state({{"encoder.", encoder_.get()}, {"rate_head.", rate_head_.get()}, {"decoder.", decoder_.get()}});
}

void PrpModel::load_state_dict(const StateDict& state, bool strict) {
  restore_state({{"encoder.", encoder_.get()}, {"rate_head.", rate_head_.get()}, {"decoder.", decoder_.get()}}, state,
                strict);
}

// ---------------------------------------------------------------------------
// ActionClassifier

ActionClassifier::ActionClassifier(BackboneConfig backbone, int num_classes, uint64_t seed)
    : backbone_(std::move(backbone)), num_classes_(num_classes) {
  if (num_classes < 2) throw ConfigError("action classifier needs at least 2 classes");
  std::mt19937_64 rng(seed);
  encoder_ = build_encoder(backbone_, rng);
  head_ = std::make_unique<nn::Linear>(backbone_.feature_dim(), num_classes, rng);
}

void ActionClassifier::load_encoder(const StateDict& state) { restore_state({{"encoder.", encoder_.get()}}, state, true); }

EncodeResult ActionClassifier::encode(const Tensor& clips, Mode mode) {
  check_clip_shape(clips, backbone_.input_shape);
  EncodeResult r;
  r.feature_map = encoder_->forward(clips, mode);
  r.feature_vec = gap_.forward(r.feature_map, mode);
  return r;
}

Tensor ActionClassifier::forward(const Tensor& clips, Mode mode) {
  return head_->forward(encode(clips, mode).feature_vec, mode);
}

void ActionClassifier::backward(const Tensor& grad_logits, bool backbone) {
  Tensor g = head_->backward(grad_logits);
  if (backbone) encoder_->backward(gap_.backward(g));
}

nn::NamedParams ActionClassifier::parameters(bool include_backbone) {
  nn::NamedParams params;
  nn::NamedBuffers buffers;
  if (include_backbone) encoder_->collect("encoder.", params, buffers);
  head_->collect("classifier.", params, buffers);
  return params;
}

nn::NamedBuffers ActionClassifier::buffers() {
  nn::NamedParams params;
  nn::NamedBuffers buffers;
  encoder_->collect("encoder.", params, buffers);
  return buffers;
}

void ActionClassifier::zero_grad() {
  for (auto& [name, p] : parameters()) p->zero_grad();
}

StateDict ActionClassifier::state_dict() {
  return collect_state({{"encoder.", encoder_.get()}, {"classifier.", head_.get()}});
}

void ActionClassifier::load_state_dict(const StateDict& state, bool strict) {
  restore_state({{"encoder.", encoder_.get()}, {"classifier.", head_.get()}}, state, strict);
}

}  // namespace prp::models
