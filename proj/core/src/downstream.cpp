#include "prp/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "prp/errors.hpp"
#include "prp/losses.hpp"
#include "prp/optim.hpp"
#include "prp/training.hpp"

namespace prp::downstream {

using nlohmann::json;
using video::FrameSeq;
using video::RawVideo;

ClipProtocol protocol_from(const TrainConfig& cfg, const EvalConfig& eval) {
  return {cfg.sampling.clip_len, cfg.augment, eval.num_clips};
}

std::vector<int64_t> clip_starts(int64_t frame_count, int clip_len, int num_clips) {
  if (num_clips < 1) throw InputError("num_clips must be >= 1");
  const int64_t span = std::max<int64_t>(0, frame_count - clip_len);
  std::vector<int64_t> starts(static_cast<size_t>(num_clips), 0);
  if (num_clips == 1) {
    starts[0] = span / 2;
    return starts;
  }
  for (int k = 0; k < num_clips; ++k) {
    starts[static_cast<size_t>(k)] = static_cast<int64_t>(
        std::llround(static_cast<double>(span) * k / static_cast<double>(num_clips - 1)));
  }
  return starts;
}

FrameSeq loop_pad(const FrameSeq& frames, int64_t min_frames) {
  if (frames.count() == 0) throw InputError("cannot pad an empty video");
  if (frames.count() >= min_frames) return frames;
  std::vector<int64_t> idx(static_cast<size_t>(min_frames));
  for (int64_t i = 0; i < min_frames; ++i) idx[static_cast<size_t>(i)] = i % frames.count();
  return frames.gather(idx);
}

std::vector<FrameSeq> eval_clips(const RawVideo& video, const ClipProtocol& protocol) {
  const FrameSeq frames = loop_pad(video.frames, protocol.clip_len);
  const auto window = video::center_crop_window(protocol.augment);
  std::vector<FrameSeq> clips;
  for (int64_t start : clip_starts(frames.count(), protocol.clip_len, protocol.num_clips)) {
    std::vector<int64_t> idx(static_cast<size_t>(protocol.clip_len));
    std::iota(idx.begin(), idx.end(), start);
    clips.push_back(video::apply_crop(frames.gather(idx), protocol.augment, window));
  }
  return clips;
}

json to_json(const EvalReport& report) {
  json j{{"clip_accuracy", report.clip_accuracy}, {"video_accuracy", report.video_accuracy}};
  if (!report.topk_accuracy.empty()) {
    json topk = json::object();
    for (const auto& [k, acc] : report.topk_accuracy) topk["top" + std::to_string(k)] = acc;
    j["topk_accuracy"] = topk;
  }
  j["metadata"] = report.metadata;
  return j;
}

namespace {

void check_compatible(const models::Checkpoint& ckpt, const TrainConfig& cfg) {
  if (!ckpt.config.contains("model")) throw ConfigError("checkpoint has no model snapshot");
  const json have = ckpt.config.at("model").at("backbone");
  const json want = prp::to_json(cfg.backbone);
  const auto diff = json_diff(have, want, "backbone");
  if (!diff.empty()) {
    std::string msg = "checkpoint backbone is incompatible with the run config; differing keys:";
    for (const auto& k : diff) msg += " " + k;
    throw ConfigError(msg);
  }
}

}  // namespace

FinetuneResult finetune(const models::Checkpoint* checkpoint, std::span<const RawVideo> dataset, int num_classes,
                        const TrainConfig& input_cfg, const FinetuneConfig& cfg, const FinetuneMonitor& monitor) {
  TrainConfig train_cfg = input_cfg;
  train_cfg.resolve();
  cfg.validate();
  if (dataset.empty()) throw DatasetError("fine-tuning dataset is empty");
  for (const auto& v : dataset) {
    if (!v.label) throw DatasetError("fine-tuning needs labelled videos (" + v.source_id + " has none)");
    if (*v.label < 0 || *v.label >= num_classes) {
      throw ConfigError("label " + std::to_string(*v.label) + " of " + v.source_id +
                        " does not fit a classifier head with " + std::to_string(num_classes) + " classes");
    }
  }

  FinetuneResult result;
  result.model = std::make_unique<models::ActionClassifier>(train_cfg.backbone, num_classes, cfg.seed + 1);
  if (checkpoint) {
    check_compatible(*checkpoint, train_cfg);
    result.model->load_encoder(checkpoint->tensors);
  }
  optim::Sgd optimizer({cfg.learning_rate, cfg.momentum, cfg.weight_decay, 0.0});
  const ClipProtocol protocol = protocol_from(train_cfg);
  const int clip_len = train_cfg.sampling.clip_len;
  const nn::Mode encoder_mode = cfg.frozen_backbone ? nn::Mode::kEval : nn::Mode::kTrain;

  std::mt19937_64 rng(cfg.seed ^ 0xf17e7u);
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, acc_sum = 0.0;
    size_t seen = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      std::vector<FrameSeq> clips;
      std::vector<int> labels;
      for (size_t i = begin; i < end; ++i) {
        const RawVideo& v = dataset[order[i]];
        const FrameSeq frames = loop_pad(v.frames, clip_len);
        const int64_t start = std::uniform_int_distribution<int64_t>(0, frames.count() - clip_len)(rng);
        std::vector<int64_t> idx(static_cast<size_t>(clip_len));
        std::iota(idx.begin(), idx.end(), start);
        video::AugmentSpec aug = train_cfg.augment;
        aug.seed = rng();
        clips.push_back(video::augment_clip(frames.gather(idx), aug));
        labels.push_back(*v.label);
      }
      const Tensor inputs = models::clips_to_tensor(clips);
      result.model->zero_grad();
      const Tensor logits = result.model->forward(inputs, encoder_mode);
      const auto loss = losses::discriminative_loss(logits, labels);
      if (!std::isfinite(loss.value)) throw DivergenceError("fine-tuning loss became non-finite");
      result.model->backward(loss.grad, !cfg.frozen_backbone);
      optimizer.step(result.model->parameters(!cfg.frozen_backbone));
      loss_sum += loss.value * static_cast<double>(labels.size());
      acc_sum += losses::accuracy(logits, labels) * static_cast<double>(labels.size());
      seen += labels.size();
    }
    FinetuneRecord record{epoch, loss_sum / static_cast<double>(seen), acc_sum / static_cast<double>(seen), {}};
    if (!monitor.eval_videos.empty()) {
      record.eval_accuracy = evaluate(*result.model, monitor.eval_videos, protocol).video_accuracy;
      if (monitor.threshold > 0 && !result.epochs_to_threshold && *record.eval_accuracy >= monitor.threshold) {
        result.epochs_to_threshold = epoch;
      }
    }
    result.history.push_back(record);
    if (monitor.stop_at_threshold && result.epochs_to_threshold) break;
  }
  return result;
}

std::pair<int, std::vector<double>> average_clip_probabilities(const Tensor& probs) {
  if (probs.rank() != 2 || probs.dim(0) < 1) throw InputError("expected (n_clips, C) probabilities");
  const int64_t n = probs.dim(0), c = probs.dim(1);
  std::vector<double> mean(static_cast<size_t>(c), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < c; ++k) mean[static_cast<size_t>(k)] += probs[i * c + k] / static_cast<double>(n);
  }
  const int arg = static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  return {arg, mean};
}

namespace {

Tensor clip_probabilities(models::ActionClassifier& model, const RawVideo& video, const ClipProtocol& protocol) {
  const auto clips = eval_clips(video, protocol);
  return losses::softmax(model.forward(models::clips_to_tensor(clips), nn::Mode::kEval));
}

}  // namespace

int evaluate_10clip(models::ActionClassifier& model, const RawVideo& video, const ClipProtocol& protocol) {
  return average_clip_probabilities(clip_probabilities(model, video, protocol)).first;
}

EvalReport evaluate(models::ActionClassifier& model, std::span<const RawVideo> videos, const ClipProtocol& protocol) {
  if (videos.empty()) throw DatasetError("evaluation set is empty");
  EvalReport report;
  int64_t clip_hits = 0, clip_total = 0, video_hits = 0;
  for (const auto& v : videos) {
    if (!v.label) throw DatasetError("evaluation needs labelled videos (" + v.source_id + " has none)");
    const Tensor probs = clip_probabilities(model, v, protocol);
    const int64_t c = probs.dim(1);
    for (int64_t i = 0; i < probs.dim(0); ++i) {
      const double* row = probs.data() + i * c;
      if (std::max_element(row, row + c) - row == *v.label) ++clip_hits;
      ++clip_total;
    }
    if (average_clip_probabilities(probs).first == *v.label) ++video_hits;
  }
  report.clip_accuracy = static_cast<double>(clip_hits) / static_cast<double>(clip_total);
  report.video_accuracy = static_cast<double>(video_hits) / static_cast<double>(videos.size());
  return report;
}

FeatureFn feature_fn(models::PrpModel& model) {
  return [&model](const Tensor& clips) { return model.encode(clips, nn::Mode::kEval).feature_vec; };
}

FeatureFn feature_fn(models::ActionClassifier& model) {
  return [&model](const Tensor& clips) { return model.encode(clips, nn::Mode::kEval).feature_vec; };
}

void RetrievalIndex::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (static_cast<int64_t>(e.feature.size()) != feature_dim) {
      throw InputError("retrieval entry " + e.video_id + " has dimension " + std::to_string(e.feature.size()) +
                       ", index expects " + std::to_string(feature_dim));
    }
    if (!ids.insert(e.video_id).second) throw InputError("duplicate video id in retrieval index: " + e.video_id);
  }
}

std::vector<double> video_feature(const FeatureFn& features, const RawVideo& video, const ClipProtocol& protocol) {
  const auto clips = eval_clips(video, protocol);
  const Tensor f = features(models::clips_to_tensor(clips));
  const int64_t n = f.dim(0), d = f.dim(1);
  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < d; ++k) mean[static_cast<size_t>(k)] += f[i * d + k] / static_cast<double>(n);
  }
  const double norm = std::sqrt(std::inner_product(mean.begin(), mean.end(), mean.begin(), 0.0));
  if (norm > 0) {
    for (double& v : mean) v /= norm;
  }
  return mean;
}

RetrievalIndex build_retrieval_index(const FeatureFn& features, std::span<const RawVideo> videos,
                                     const ClipProtocol& protocol) {
  RetrievalIndex index;
  for (const auto& v : videos) {
    RetrievalEntry e{v.source_id, v.label.value_or(-1), video_feature(features, v, protocol)};
    index.feature_dim = static_cast<int64_t>(e.feature.size());
    index.entries.push_back(std::move(e));
  }
  index.config = json{{"layer", "conv5"},
                      {"pooling", "global_average"},
                      {"clip_aggregation", "mean"},
                      {"normalization", "l2"},
                      {"metric", "cosine"},
                      {"clip_len", protocol.clip_len},
                      {"num_clips", protocol.num_clips},
                      {"resize_hw", {protocol.augment.resize_hw.first, protocol.augment.resize_hw.second}},
                      {"crop_hw", {protocol.augment.crop_hw.first, protocol.augment.crop_hw.second}}};
  index.validate();
  return index;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("cosine similarity of vectors with different lengths");
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  if (na == 0 || nb == 0) return 0.0;
  return dot / (na * nb);
}

RetrievalResult retrieve_topk(const RetrievalIndex& index, std::span<const double> query, int query_label,
                              std::span<const int> ks) {
  if (index.entries.empty()) throw InputError("retrieval index is empty");
  if (static_cast<int64_t>(query.size()) != index.feature_dim) throw InputError("query dimension mismatch");
  for (int k : ks) {
    if (k < 1 || static_cast<size_t>(k) > index.entries.size()) {
      throw InputError("k=" + std::to_string(k) + " exceeds the index size " + std::to_string(index.entries.size()));
    }
  }
  RetrievalResult result;
  std::vector<double> sims(index.entries.size());
  for (size_t i = 0; i < sims.size(); ++i) sims[i] = cosine_similarity(index.entries[i].feature, query);
  result.ranking.resize(sims.size());
  std::iota(result.ranking.begin(), result.ranking.end(), 0);
  std::sort(result.ranking.begin(), result.ranking.end(), [&](size_t a, size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return index.entries[a].video_id < index.entries[b].video_id;
  });
  for (size_t i : result.ranking) result.similarity.push_back(sims[i]);
  for (int k : ks) {
    bool hit = false;
    for (int r = 0; r < k && !hit; ++r) hit = index.entries[result.ranking[static_cast<size_t>(r)]].label == query_label;
    result.hits[k] = hit;
  }
  return result;
}

RetrievalResult retrieve_topk(const RetrievalIndex& index, const RawVideo& query, const FeatureFn& features,
                              const ClipProtocol& protocol, std::span<const int> ks) {
  return retrieve_topk(index, video_feature(features, query, protocol), query.label.value_or(-1), ks);
}

std::map<int, double> topk_accuracy(const RetrievalIndex& index, const RetrievalIndex& queries,
                                    std::span<const int> ks) {
  if (queries.entries.empty()) throw InputError("no retrieval queries");
  std::map<int, double> acc;
  for (int k : ks) acc[k] = 0.0;
  for (const auto& q : queries.entries) {
    const auto r = retrieve_topk(index, q.feature, q.label, ks);
    for (int k : ks) acc[k] += r.hits.at(k) ? 1.0 : 0.0;
  }
  for (auto& [k, v] : acc) v /= static_cast<double>(queries.entries.size());
  return acc;
}

void save_retrieval_index(const RetrievalIndex& index, const std::filesystem::path& dir) {
  index.validate();
  std::filesystem::create_directories(dir);
  json sidecar{{"feature_dim", index.feature_dim}, {"config", index.config}, {"dtype", "float64-le"}};
  json entries = json::array();
  std::ofstream blob(dir / "features.bin", std::ios::binary | std::ios::trunc);
  int64_t offset = 0;
  for (const auto& e : index.entries) {
    entries.push_back({{"video_id", e.video_id}, {"label", e.label}, {"offset", offset}});
    blob.write(reinterpret_cast<const char*>(e.feature.data()),
               static_cast<std::streamsize>(e.feature.size() * sizeof(double)));
    offset += index.feature_dim;
  }
  if (!blob) throw InputError("failed to write " + (dir / "features.bin").string());
  sidecar["entries"] = entries;
  std::ofstream(dir / "index.json") << sidecar.dump(2) << '\n';
}

RetrievalIndex load_retrieval_index(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "index.json");
  if (!meta) throw InputError("missing " + (dir / "index.json").string());
  json sidecar;
  meta >> sidecar;
  RetrievalIndex index;
  index.feature_dim = sidecar.at("feature_dim").get<int64_t>();
  index.config = sidecar.at("config");
  std::ifstream blob(dir / "features.bin", std::ios::binary);
  if (!blob) throw InputError("missing " + (dir / "features.bin").string());
  std::vector<double> all;
  blob.seekg(0, std::ios::end);
  all.resize(static_cast<size_t>(blob.tellg()) / sizeof(double));
  blob.seekg(0);
  blob.read(reinterpret_cast<char*>(all.data()), static_cast<std::streamsize>(all.size() * sizeof(double)));
  for (const auto& e : sidecar.at("entries")) {
    const auto offset = e.at("offset").get<int64_t>();
    if (offset + index.feature_dim > static_cast<int64_t>(all.size())) throw InputError("truncated features.bin");
    RetrievalEntry entry{e.at("video_id").get<std::string>(), e.at("label").get<int>(),
                         std::vector<double>(all.begin() + offset, all.begin() + offset + index.feature_dim)};
    index.entries.push_back(std::move(entry));
  }
  index.validate();
  return index;
}

}  // namespace prp::downstream
