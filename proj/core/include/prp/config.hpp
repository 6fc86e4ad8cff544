#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prp/attention.hpp"
#include "prp/losses.hpp"
#include "prp/models.hpp"
#include "prp/sampling.hpp"
#include "prp/video.hpp"

namespace prp {

/// Which pretext losses drive pretraining: rate classification, slow-down reconstruction, or both.
enum class PerceptionMode { kDP, kGP, kDGP };

std::string to_string(PerceptionMode mode);
PerceptionMode parse_mode(const std::string& name);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int epochs = 300;
  int batch_size = 16;
  /// >= 1: number of held-out videos; in (0, 1): fraction of the dataset.
  double val_fraction_or_count = 800;
  /// Validation clips drawn per (video, interval) pair.
  int val_clips_per_interval = 2;
  uint64_t seed = 0;
  losses::LossWeights loss_weights;
  sampling::SamplingSpec sampling;
  models::BackboneConfig backbone;
  models::DecoderConfig decoder;
  attention::AttentionParams attention;
  video::AugmentSpec augment;
  PerceptionMode mode = PerceptionMode::kDGP;
  bool attention_enabled = true;
  double grad_clip = 0.0;
  /// Step decay hook: multiply the rate by lr_step_gamma every lr_step_epochs (0 = constant rate).
  int lr_step_epochs = 0;
  double lr_step_gamma = 0.1;

  /// Copies derived fields (input shape, decoder rate) from the sampling/augment settings.
  void resolve();
  void validate() const;
  /// Loss weights with the unused head masked out for DP/GP.
  losses::LossWeights effective_weights() const;
};

struct FinetuneConfig {
  int epochs = 150;
  int batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  bool frozen_backbone = false;
  uint64_t seed = 0;

  void validate() const;
};

struct EvalConfig {
  int num_clips = 10;
};

struct RetrievalConfig {
  std::vector<int> ks{1, 5, 10, 20, 50};
  std::string layer = "conv5";
};

struct SyntheticConfig {
  std::vector<int> speeds{1, 3};
  int videos_per_class = 8;
  int frame_count = 72;
  int height = 32;
  int width = 32;
  double noise_std = 0.02;

  video::SyntheticSpec to_spec(uint64_t seed) const;
};

struct DataPaths {
  std::string train_root;
  std::string test_root;
};

/// Everything a CLI run needs; mirrors the JSON config file.
struct RunConfig {
  std::string profile = "desk";
  uint64_t seed = 0;
  std::string output_dir = "out";
  DataPaths data;
  TrainConfig train;
  FinetuneConfig finetune;
  EvalConfig eval;
  RetrievalConfig retrieval;
  SyntheticConfig synthetic;
  std::vector<int> visualize_frames{0};

  void resolve();
  void validate() const;
};

/// Preset defaults: "paper" uses full-size hyperparameters, "desk" a tiny CPU-friendly setup.
RunConfig profile_defaults(const std::string& profile);

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays `doc` on the profile named by doc["profile"] (or `profile`); rejects unknown keys.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::string& profile = "");
RunConfig load_run_config(const std::string& path, const std::string& profile = "");

nlohmann::json to_json(const models::BackboneConfig& cfg);
models::BackboneConfig backbone_from_json(const nlohmann::json& j);
nlohmann::json to_json(const models::DecoderConfig& cfg);
models::DecoderConfig decoder_from_json(const nlohmann::json& j);

/// Short stable hex digest of a JSON document.
std::string config_hash(const nlohmann::json& j);

/// Key paths whose values differ between two JSON documents.
std::vector<std::string> json_diff(const nlohmann::json& a, const nlohmann::json& b, const std::string& prefix = "");

}  // namespace prp
