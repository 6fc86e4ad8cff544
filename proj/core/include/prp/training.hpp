#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prp/checkpoint.hpp"
#include "prp/config.hpp"
#include "prp/losses.hpp"
#include "prp/models.hpp"
#include "prp/optim.hpp"
#include "prp/sampling.hpp"

namespace prp::training {

/// One row of the training log.
struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double dp_accuracy = 0.0;
  double learning_rate = 0.0;
};

nlohmann::json to_json(const EpochRecord& r);

struct PretrainResult {
  models::Checkpoint checkpoint;  // lowest validation loss
  std::vector<EpochRecord> log;
  double initial_train_loss = 0.0;  // joint loss of the very first batch, before any update
  int best_epoch = 0;
};

/// Network-ready tensors for a list of samples.
struct Batch {
  Tensor inputs;        // (N, C, l, H, W)
  Tensor ground_truth;  // (N, C, r*l, H, W)
  Tensor attention;     // (N, 1, r*l, H, W); empty when the generative head is off
  std::vector<int> rate_labels;
};

/// Packs samples; motion attention (or all-ones weights when disabled) is computed only when
/// the generative loss is active.
Batch collate(std::span<const sampling::TrainingSample> samples, const TrainConfig& cfg);

/// Stratified (by label, when present) seeded split into train / validation indices.
struct Split {
  std::vector<size_t> train;
  std::vector<size_t> val;
};
Split split_videos(std::span<const video::RawVideo> videos, double val_fraction_or_count, uint64_t seed);

/// Deterministic samples: for each video and supported interval, `per_interval` evenly spaced
/// starts, center-cropped.
std::vector<sampling::TrainingSample> make_eval_samples(std::span<const video::RawVideo> videos,
                                                        const TrainConfig& cfg, int per_interval);

/// Forward pass (and, with `backprop`, gradient accumulation) of the mode's objective.
losses::LossReport compute_objective(models::PrpModel& model, const Batch& batch, const TrainConfig& cfg,
                                     nn::Mode mode, bool backprop);

/// zero_grad + objective + optimizer step.
losses::LossReport train_step(models::PrpModel& model, optim::Sgd& optimizer, const Batch& batch,
                              const TrainConfig& cfg);

/// Eval-mode pass over `samples`; dp_accuracy is the argmax hit rate of the rate head.
losses::LossReport validate(models::PrpModel& model, std::span<const sampling::TrainingSample> samples,
                            const TrainConfig& cfg);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// SGD pretraining; returns the checkpoint with the lowest validation loss.
/// Throws DivergenceError when a loss turns non-finite.
PretrainResult pretrain(std::span<const video::RawVideo> dataset, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {}, const nlohmann::json& config_snapshot = {});

/// Rebuilds a model from a pretraining checkpoint.
models::PrpModel model_from_checkpoint(const models::Checkpoint& ckpt);

/// JSON block describing model shapes; stored in checkpoints as config["model"].
nlohmann::json model_snapshot(const TrainConfig& cfg);

struct AblationCell {
  PerceptionMode mode = PerceptionMode::kDGP;
  std::vector<int> intervals{1, 2, 4, 8};
  int recon_rate = 2;
  bool attention_enabled = true;
};

struct AblationRow {
  AblationCell cell;
  double best_val_loss = 0.0;
  double dp_accuracy = 0.0;
  double downstream_accuracy = 0.0;
  std::optional<double> reported_ucf101;  // full-scale reference accuracy for the same cell, if known
};

/// Full-scale UCF101 reference accuracy for a grid cell, when one is known.
std::optional<double> reported_ucf101_accuracy(const AblationCell& cell);

/// Pretrains each cell on the train split, fine-tunes on it and reports held-out video accuracy.
/// Every cell is validated before any training starts.
std::vector<AblationRow> run_ablation_grid(std::span<const video::RawVideo> dataset, const RunConfig& base,
                                           std::span<const AblationCell> grid);

/// Tab-separated table: method, sampling interval, reconstructing rate, downstream accuracy, reported.
std::string format_ablation_table(std::span<const AblationRow> rows);

}  // namespace prp::training
