#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prp/checkpoint.hpp"
#include "prp/config.hpp"
#include "prp/models.hpp"
#include "prp/video.hpp"

namespace prp::downstream {

/// Clip geometry shared by fine-tuning, evaluation and retrieval.
struct ClipProtocol {
  int clip_len = 16;
  video::AugmentSpec augment;
  int num_clips = 10;
};

ClipProtocol protocol_from(const TrainConfig& cfg, const EvalConfig& eval = {});

/// Evenly spaced clip starts over [0, frame_count - clip_len]; all zero when the video is shorter.
std::vector<int64_t> clip_starts(int64_t frame_count, int clip_len, int num_clips);

/// Loops the video's frames until it has at least `min_frames`.
video::FrameSeq loop_pad(const video::FrameSeq& frames, int64_t min_frames);

/// The `num_clips` center-cropped evaluation clips of a video.
std::vector<video::FrameSeq> eval_clips(const video::RawVideo& video, const ClipProtocol& protocol);

struct EvalReport {
  double clip_accuracy = 0.0;
  double video_accuracy = 0.0;
  std::map<int, double> topk_accuracy;
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json to_json(const EvalReport& report);

struct FinetuneRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> eval_accuracy;
};

struct FinetuneResult {
  std::unique_ptr<models::ActionClassifier> model;
  std::vector<FinetuneRecord> history;
  /// First epoch (1-based) whose held-out video accuracy reached the threshold.
  std::optional<int> epochs_to_threshold;
};

struct FinetuneMonitor {
  std::span<const video::RawVideo> eval_videos;
  double threshold = 0.0;   // > 0 enables epochs_to_threshold tracking
  bool stop_at_threshold = false;
};

/// Trains an action classifier. With a pretraining checkpoint the encoder starts from its
/// "encoder.*" tensors; otherwise from a seeded random init. The head is always fresh.
FinetuneResult finetune(const models::Checkpoint* checkpoint, std::span<const video::RawVideo> dataset,
                        int num_classes, const TrainConfig& train_cfg, const FinetuneConfig& cfg,
                        const FinetuneMonitor& monitor = {});

/// Averages per-clip softmax rows of (n_clips, C) probabilities; returns (argmax, mean row).
std::pair<int, std::vector<double>> average_clip_probabilities(const Tensor& probs);

/// Softmax of each evaluation clip, averaged; returns the predicted class.
int evaluate_10clip(models::ActionClassifier& model, const video::RawVideo& video, const ClipProtocol& protocol);

/// Clip- and video-level accuracy over labelled videos.
EvalReport evaluate(models::ActionClassifier& model, std::span<const video::RawVideo> videos,
                    const ClipProtocol& protocol);

/// Maps an (N, C, T, H, W) clip batch to (N, D) conv5 global-average features.
using FeatureFn = std::function<Tensor(const Tensor&)>;
FeatureFn feature_fn(models::PrpModel& model);
FeatureFn feature_fn(models::ActionClassifier& model);

struct RetrievalEntry {
  std::string video_id;
  int label = 0;
  std::vector<double> feature;
};

struct RetrievalIndex {
  int64_t feature_dim = 0;
  std::vector<RetrievalEntry> entries;
  nlohmann::json config = nlohmann::json::object();

  /// Throws InputError on mixed dimensions or duplicate ids.
  void validate() const;
};

/// Mean of the per-clip features, L2-normalized.
std::vector<double> video_feature(const FeatureFn& features, const video::RawVideo& video,
                                  const ClipProtocol& protocol);

RetrievalIndex build_retrieval_index(const FeatureFn& features, std::span<const video::RawVideo> videos,
                                     const ClipProtocol& protocol);

struct RetrievalResult {
  std::vector<size_t> ranking;  // entry indices, most similar first
  std::vector<double> similarity;
  std::map<int, bool> hits;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Ranks the whole index by cosine similarity (ties by video_id) and flags hits at each k.
RetrievalResult retrieve_topk(const RetrievalIndex& index, std::span<const double> query, int query_label,
                              std::span<const int> ks);
RetrievalResult retrieve_topk(const RetrievalIndex& index, const video::RawVideo& query, const FeatureFn& features,
                              const ClipProtocol& protocol, std::span<const int> ks);

/// Fraction of queries with a hit at each k.
std::map<int, double> topk_accuracy(const RetrievalIndex& index, const RetrievalIndex& queries,
                                    std::span<const int> ks);

/// features.bin (float64, row-major) + index.json sidecar.
void save_retrieval_index(const RetrievalIndex& index, const std::filesystem::path& dir);
RetrievalIndex load_retrieval_index(const std::filesystem::path& dir);

}  // namespace prp::downstream
