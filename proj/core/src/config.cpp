#include "prp/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "prp/errors.hpp"

using nlohmann::json;

namespace prp {

std::string to_string(PerceptionMode mode) {
  switch (mode) {
    case PerceptionMode::kDP:
      return "DP";
    case PerceptionMode::kGP:
      return "GP";
    case PerceptionMode::kDGP:
      return "DGP";
  }
  return "unknown";
}

PerceptionMode parse_mode(const std::string& name) {
  if (name == "DP") return PerceptionMode::kDP;
  if (name == "GP") return PerceptionMode::kGP;
  if (name == "DGP" || name == "DG-P") return PerceptionMode::kDGP;
  throw ConfigError("train.mode: unknown mode '" + name + "' (expected DP, GP or DGP)");
}

void TrainConfig::resolve() {
  backbone.input_shape = {sampling.clip_len, augment.crop_hw.first, augment.crop_hw.second, 3};
  decoder.recon_rate = sampling.recon_rate;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0)) throw ConfigError("train.learning_rate must be >= 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(val_fraction_or_count > 0)) throw ConfigError("train.val_fraction_or_count must be > 0");
  if (val_clips_per_interval < 1) throw ConfigError("train.val_clips_per_interval must be >= 1");
  if (lr_step_epochs < 0) throw ConfigError("train.lr_step_epochs must be >= 0");
  loss_weights.validate();
  sampling.validate();
  backbone.validate();
  decoder.validate();
  attention.validate();
  if (augment.crop_hw.first > augment.resize_hw.first || augment.crop_hw.second > augment.resize_hw.second) {
    throw ConfigError("augment.crop_hw must not exceed augment.resize_hw");
  }
  if (decoder.recon_rate != sampling.recon_rate) throw ConfigError("decoder recon_rate differs from sampling.recon_rate");
  if (sampling.num_classes() < 2 && mode != PerceptionMode::kGP) {
    throw ConfigError("sampling.intervals needs at least 2 entries for rate classification");
  }
  const auto w = effective_weights();
  if (w.lambda_d == 0 && w.lambda_g == 0) {
    throw ConfigError("train.loss_weights: the weight of the active loss for mode " + to_string(mode) + " is zero");
  }
}

losses::LossWeights TrainConfig::effective_weights() const {
  losses::LossWeights w = loss_weights;
  if (mode == PerceptionMode::kDP) w.lambda_g = 0;
  if (mode == PerceptionMode::kGP) w.lambda_d = 0;
  return w;
}

void FinetuneConfig::validate() const {
  if (epochs < 0) throw ConfigError("finetune.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("finetune.batch_size must be >= 1");
  if (!(learning_rate >= 0)) throw ConfigError("finetune.learning_rate must be >= 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("finetune.momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("finetune.weight_decay must be >= 0");
}

video::SyntheticSpec SyntheticConfig::to_spec(uint64_t seed) const {
  video::SyntheticSpec spec;
  spec.motion_classes = video::default_motion_classes(speeds);
  spec.num_videos = videos_per_class * static_cast<int>(spec.motion_classes.size());
  spec.frame_count = frame_count;
  spec.height = height;
  spec.width = width;
  spec.noise_std = noise_std;
  spec.seed = seed;
  return spec;
}

void RunConfig::resolve() {
  train.seed = seed;
  finetune.seed = seed;
  train.resolve();
}

void RunConfig::validate() const {
  if (profile != "desk" && profile != "paper") throw ConfigError("profile must be 'desk' or 'paper'");
  train.validate();
  finetune.validate();
  if (eval.num_clips < 1) throw ConfigError("eval.num_clips must be >= 1");
  if (retrieval.ks.empty()) throw ConfigError("retrieval.ks must not be empty");
  for (int k : retrieval.ks) {
    if (k < 1) throw ConfigError("retrieval.ks entries must be >= 1");
  }
  if (retrieval.layer != "conv5") throw ConfigError("retrieval.layer: only 'conv5' is supported");
  if (synthetic.speeds.empty()) throw ConfigError("synthetic.speeds must not be empty");
  if (synthetic.videos_per_class < 1 || synthetic.frame_count < 1) {
    throw ConfigError("synthetic.videos_per_class and synthetic.frame_count must be >= 1");
  }
  if (synthetic.noise_std < 0) throw ConfigError("synthetic.noise_std must be >= 0");
}

RunConfig profile_defaults(const std::string& profile) {
  RunConfig cfg;
  cfg.profile = profile;
  if (profile == "paper") {
    cfg.train = TrainConfig{};
    cfg.train.augment = {{128, 171}, {112, 112}, true, 0};
    cfg.finetune = FinetuneConfig{};
    cfg.synthetic.height = 128;
    cfg.synthetic.width = 171;
    cfg.synthetic.frame_count = 160;
  } else if (profile == "desk") {
    TrainConfig& t = cfg.train;
    t.epochs = 30;
    t.batch_size = 8;
    t.val_fraction_or_count = 0.25;
    t.sampling.intervals = {1, 2, 4, 8};
    t.sampling.clip_len = 8;
    t.sampling.recon_rate = 2;
    t.backbone.block_channels = {8, 16, 16, 32, 32};
    t.decoder.block_channels = {32, 16, 8, 3};
    t.attention.pool_kernel = {7, 8, 8};
    t.attention.pool_stride = {8, 2, 2};
    t.augment = {{32, 32}, {32, 32}, false, 0};
    cfg.finetune.epochs = 20;
    cfg.finetune.batch_size = 8;
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
  }
  cfg.resolve();
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string attention_source_name(sampling::AttentionSource s) {
  return s == sampling::AttentionSource::kRawWindow ? "raw_window" : "gt_aligned";
}

sampling::AttentionSource parse_attention_source(const std::string& s) {
  if (s == "gt_aligned") return sampling::AttentionSource::kGroundTruthAligned;
  if (s == "raw_window") return sampling::AttentionSource::kRawWindow;
  throw ConfigError("sampling.attention_source: expected gt_aligned or raw_window, got '" + s + "'");
}

template <size_t N>
std::array<int64_t, N> to_array(const json& j, const std::string& key) {
  const auto v = j.get<std::vector<int64_t>>();
  if (v.size() != N) throw ConfigError(key + " must have " + std::to_string(N) + " entries");
  std::array<int64_t, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::pair<int, int> to_pair(const json& j, const std::string& key) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != 2) throw ConfigError(key + " must have 2 entries");
  return {v[0], v[1]};
}

void reject_unknown(const json& doc, const json& reference, const std::string& prefix) {
  if (!doc.is_object()) return;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!reference.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    const json& ref = reference.at(it.key());
    if (ref.is_object()) {
      if (!it.value().is_object()) throw ConfigError("config key '" + path + "' must be an object");
      reject_unknown(it.value(), ref, path);
    }
  }
}

}  // namespace

json to_json(const models::BackboneConfig& cfg) {
  const auto& s = cfg.input_shape;
  return json{{"variant", models::to_string(cfg.variant)},
              {"block_channels", cfg.block_channels},
              {"conv_kernel", cfg.conv_kernel},
              {"temporal_pool_strides", cfg.temporal_pool_strides},
              {"spatial_pool_stride", cfg.spatial_pool_stride},
              {"input_shape", std::vector<int64_t>{s.frames, s.height, s.width, s.channels}}};
}

models::BackboneConfig backbone_from_json(const json& j) {
  models::BackboneConfig cfg;
  cfg.variant = models::parse_variant(j.at("variant").get<std::string>());
  cfg.block_channels = to_array<5>(j.at("block_channels"), "backbone.block_channels");
  cfg.conv_kernel = to_array<3>(j.at("conv_kernel"), "backbone.conv_kernel");
  cfg.temporal_pool_strides = to_array<5>(j.at("temporal_pool_strides"), "backbone.temporal_pool_strides");
  cfg.spatial_pool_stride = j.at("spatial_pool_stride").get<int64_t>();
  if (j.contains("input_shape")) {
    const auto s = to_array<4>(j.at("input_shape"), "backbone.input_shape");
    cfg.input_shape = {s[0], s[1], s[2], s[3]};
  }
  return cfg;
}

json to_json(const models::DecoderConfig& cfg) {
  return json{{"block_channels", cfg.block_channels}, {"recon_rate", cfg.recon_rate}};
}

models::DecoderConfig decoder_from_json(const json& j) {
  models::DecoderConfig cfg;
  cfg.block_channels = to_array<4>(j.at("block_channels"), "decoder.block_channels");
  if (j.contains("recon_rate")) cfg.recon_rate = j.at("recon_rate").get<int>();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json backbone = to_json(t.backbone);
  backbone.erase("input_shape");
  json decoder = to_json(t.decoder);
  decoder.erase("recon_rate");
  return json{
      {"profile", cfg.profile},
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"data", {{"train_root", cfg.data.train_root}, {"test_root", cfg.data.test_root}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"val_fraction_or_count", t.val_fraction_or_count},
        {"val_clips_per_interval", t.val_clips_per_interval},
        {"mode", to_string(t.mode)},
        {"attention_enabled", t.attention_enabled},
        {"grad_clip", t.grad_clip},
        {"lr_step_epochs", t.lr_step_epochs},
        {"lr_step_gamma", t.lr_step_gamma},
        {"loss_weights", {{"lambda_d", t.loss_weights.lambda_d}, {"lambda_g", t.loss_weights.lambda_g}}}}},
      {"sampling",
       {{"intervals", t.sampling.intervals},
        {"clip_len", t.sampling.clip_len},
        {"recon_rate", t.sampling.recon_rate},
        {"attention_source", attention_source_name(t.sampling.attention_source)}}},
      {"backbone", backbone},
      {"decoder", decoder},
      {"attention",
       {{"lambda1", t.attention.lambda1},
        {"lambda2", t.attention.lambda2},
        {"pool_kernel", t.attention.pool_kernel},
        {"pool_stride", t.attention.pool_stride},
        {"upsample_mode", "trilinear_align_corners"}}},
      {"augment",
       {{"resize_hw", std::vector<int>{t.augment.resize_hw.first, t.augment.resize_hw.second}},
        {"crop_hw", std::vector<int>{t.augment.crop_hw.first, t.augment.crop_hw.second}},
        {"flip", t.augment.flip}}},
      {"finetune",
       {{"epochs", cfg.finetune.epochs},
        {"batch_size", cfg.finetune.batch_size},
        {"learning_rate", cfg.finetune.learning_rate},
        {"momentum", cfg.finetune.momentum},
        {"weight_decay", cfg.finetune.weight_decay},
        {"frozen_backbone", cfg.finetune.frozen_backbone}}},
      {"eval", {{"num_clips", cfg.eval.num_clips}}},
      {"retrieval", {{"ks", cfg.retrieval.ks}, {"layer", cfg.retrieval.layer}}},
      {"synthetic",
       {{"speeds", cfg.synthetic.speeds},
        {"videos_per_class", cfg.synthetic.videos_per_class},
        {"frame_count", cfg.synthetic.frame_count},
        {"height", cfg.synthetic.height},
        {"width", cfg.synthetic.width},
        {"noise_std", cfg.synthetic.noise_std}}},
      {"visualize", {{"frames", cfg.visualize_frames}}},
  };
}

RunConfig run_config_from_json(const json& doc, const std::string& profile) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  std::string chosen = profile;
  if (chosen.empty()) chosen = doc.value("profile", std::string("desk"));
  const RunConfig base = profile_defaults(chosen);
  json merged = to_json(base);
  reject_unknown(doc, merged, "");
  if (doc.contains("attention") && doc["attention"].contains("upsample_mode") &&
      doc["attention"]["upsample_mode"] != "trilinear_align_corners" && doc["attention"]["upsample_mode"] != "trilinear") {
    throw ConfigError("attention.upsample_mode: only trilinear is supported");
  }
  merged.merge_patch(doc);
  merged["profile"] = chosen;

  std::string key;
  try {
    RunConfig cfg = base;
    key = "seed";
    cfg.seed = merged.at("seed").get<uint64_t>();
    key = "output_dir";
    cfg.output_dir = merged.at("output_dir").get<std::string>();
    key = "data";
    cfg.data.train_root = merged.at("data").at("train_root").get<std::string>();
    cfg.data.test_root = merged.at("data").at("test_root").get<std::string>();

    const json& t = merged.at("train");
    TrainConfig& tc = cfg.train;
    key = "train.learning_rate";
    tc.learning_rate = t.at("learning_rate").get<double>();
    key = "train.momentum";
    tc.momentum = t.at("momentum").get<double>();
    key = "train.weight_decay";
    tc.weight_decay = t.at("weight_decay").get<double>();
    key = "train.epochs";
    tc.epochs = t.at("epochs").get<int>();
    key = "train.batch_size";
    tc.batch_size = t.at("batch_size").get<int>();
    key = "train.val_fraction_or_count";
    tc.val_fraction_or_count = t.at("val_fraction_or_count").get<double>();
    key = "train.val_clips_per_interval";
    tc.val_clips_per_interval = t.at("val_clips_per_interval").get<int>();
    key = "train.mode";
    tc.mode = parse_mode(t.at("mode").get<std::string>());
    key = "train.attention_enabled";
    tc.attention_enabled = t.at("attention_enabled").get<bool>();
    key = "train.grad_clip";
    tc.grad_clip = t.at("grad_clip").get<double>();
    key = "train.lr_step_epochs";
    tc.lr_step_epochs = t.at("lr_step_epochs").get<int>();
    key = "train.lr_step_gamma";
    tc.lr_step_gamma = t.at("lr_step_gamma").get<double>();
    key = "train.loss_weights";
    tc.loss_weights.lambda_d = t.at("loss_weights").at("lambda_d").get<double>();
    tc.loss_weights.lambda_g = t.at("loss_weights").at("lambda_g").get<double>();

    const json& s = merged.at("sampling");
    key = "sampling.intervals";
    tc.sampling.intervals = s.at("intervals").get<std::vector<int>>();
    key = "sampling.clip_len";
    tc.sampling.clip_len = s.at("clip_len").get<int>();
    key = "sampling.recon_rate";
    tc.sampling.recon_rate = s.at("recon_rate").get<int>();
    key = "sampling.attention_source";
    tc.sampling.attention_source = parse_attention_source(s.at("attention_source").get<std::string>());

    key = "backbone";
    tc.backbone = backbone_from_json(merged.at("backbone"));
    key = "decoder";
    tc.decoder = decoder_from_json(merged.at("decoder"));

    const json& a = merged.at("attention");
    key = "attention.lambda1";
    tc.attention.lambda1 = a.at("lambda1").get<double>();
    key = "attention.lambda2";
    tc.attention.lambda2 = a.at("lambda2").get<double>();
    key = "attention.pool_kernel";
    tc.attention.pool_kernel = to_array<3>(a.at("pool_kernel"), key);
    key = "attention.pool_stride";
    tc.attention.pool_stride = to_array<3>(a.at("pool_stride"), key);

    const json& g = merged.at("augment");
    key = "augment.resize_hw";
    tc.augment.resize_hw = to_pair(g.at("resize_hw"), key);
    key = "augment.crop_hw";
    tc.augment.crop_hw = to_pair(g.at("crop_hw"), key);
    key = "augment.flip";
    tc.augment.flip = g.at("flip").get<bool>();

    const json& f = merged.at("finetune");
    key = "finetune";
    cfg.finetune.epochs = f.at("epochs").get<int>();
    cfg.finetune.batch_size = f.at("batch_size").get<int>();
    cfg.finetune.learning_rate = f.at("learning_rate").get<double>();
    cfg.finetune.momentum = f.at("momentum").get<double>();
    cfg.finetune.weight_decay = f.at("weight_decay").get<double>();
    cfg.finetune.frozen_backbone = f.at("frozen_backbone").get<bool>();

    key = "eval.num_clips";
    cfg.eval.num_clips = merged.at("eval").at("num_clips").get<int>();
    key = "retrieval";
    cfg.retrieval.ks = merged.at("retrieval").at("ks").get<std::vector<int>>();
    cfg.retrieval.layer = merged.at("retrieval").at("layer").get<std::string>();

    const json& y = merged.at("synthetic");
    key = "synthetic";
    cfg.synthetic.speeds = y.at("speeds").get<std::vector<int>>();
    cfg.synthetic.videos_per_class = y.at("videos_per_class").get<int>();
    cfg.synthetic.frame_count = y.at("frame_count").get<int>();
    cfg.synthetic.height = y.at("height").get<int>();
    cfg.synthetic.width = y.at("width").get<int>();
    cfg.synthetic.noise_std = y.at("noise_std").get<double>();
    key = "visualize.frames";
    cfg.visualize_frames = merged.at("visualize").at("frames").get<std::vector<int>>();

    cfg.resolve();
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError("invalid value for config key '" + key + "': " + e.what());
  }
}

RunConfig load_run_config(const std::string& path, const std::string& profile) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc, profile);
}

std::string config_hash(const json& j) {
  const size_t h = std::hash<std::string>{}(j.dump());
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::vector<std::string> json_diff(const json& a, const json& b, const std::string& prefix) {
  std::vector<std::string> out;
  if (a.is_object() && b.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (!b.contains(it.key())) {
        out.push_back(path);
      } else {
        auto sub = json_diff(it.value(), b.at(it.key()), path);
        out.insert(out.end(), sub.begin(), sub.end());
      }
    }
    for (auto it = b.begin(); it != b.end(); ++it) {
      if (!a.contains(it.key())) out.push_back(prefix.empty() ? it.key() : prefix + "." + it.key());
    }
  } else if (a != b) {
    out.push_back(prefix);
  }
  return out;
}

}  // namespace prp
