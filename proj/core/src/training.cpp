#include "prp/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "prp/attention.hpp"
#include "prp/downstream.hpp"
#include "prp/errors.hpp"

namespace prp::training {

using nlohmann::json;
using sampling::TrainingSample;
using video::RawVideo;

json to_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"train_loss", r.train_loss},
              {"val_loss", r.val_loss},
              {"dp_accuracy", r.dp_accuracy},
              {"learning_rate", r.learning_rate}};
}

Batch collate(std::span<const TrainingSample> samples, const TrainConfig& cfg) {
  if (samples.empty()) throw InputError("cannot collate an empty batch");
  Batch batch;
  std::vector<video::FrameSeq> inputs, targets;
  inputs.reserve(samples.size());
  for (const auto& s : samples) {
    inputs.push_back(s.input_clip);
    batch.rate_labels.push_back(s.rate_class);
  }
  batch.inputs = models::clips_to_tensor(inputs);
  if (cfg.effective_weights().lambda_g > 0) {
    targets.reserve(samples.size());
    std::vector<Tensor> maps;
    for (const auto& s : samples) {
      targets.push_back(s.ground_truth);
      const attention::Dims3 target{s.ground_truth.count(), s.ground_truth.height(), s.ground_truth.width()};
      if (cfg.attention_enabled) {
        maps.push_back(attention::motion_attention(s.attention_source, cfg.attention, target).weights);
      } else {
        maps.emplace_back(Shape{target[0], target[1], target[2]}, 1.0);
      }
    }
    batch.ground_truth = models::clips_to_tensor(targets);
    Tensor stacked = Tensor::stack(maps);
    batch.attention = stacked.reshaped({stacked.dim(0), 1, stacked.dim(1), stacked.dim(2), stacked.dim(3)});
  }
  return batch;
}

Split split_videos(std::span<const RawVideo> videos, double val_fraction_or_count, uint64_t seed) {
  const size_t n = videos.size();
  if (n < 2) throw DatasetError("need at least 2 videos to carve out a validation split");
  size_t n_val = val_fraction_or_count >= 1.0
                     ? static_cast<size_t>(val_fraction_or_count)
                     : static_cast<size_t>(std::lround(val_fraction_or_count * static_cast<double>(n)));
  n_val = std::clamp<size_t>(n_val, 1, n - 1);

  // Group by label, shuffle each group, then deal round-robin so the validation prefix is stratified.
  std::map<int, std::vector<size_t>> groups;
  for (size_t i = 0; i < n; ++i) groups[videos[i].label.value_or(-1)].push_back(i);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  for (auto& [label, members] : groups) std::shuffle(members.begin(), members.end(), rng);
  std::vector<size_t> order;
  order.reserve(n);
  for (size_t round = 0; order.size() < n; ++round) {
    for (auto& [label, members] : groups) {
      if (round < members.size()) order.push_back(members[round]);
    }
  }
  Split split;
  split.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

std::vector<TrainingSample> make_eval_samples(std::span<const RawVideo> videos, const TrainConfig& cfg,
                                              int per_interval) {
  std::vector<TrainingSample> samples;
  video::AugmentSpec aug = cfg.augment;
  const auto window = video::center_crop_window(aug);
  for (const auto& v : videos) {
    for (int s : cfg.sampling.intervals) {
      const auto hi = sampling::max_start(v.frame_count(), cfg.sampling, s);
      if (!hi) continue;
      for (int k = 0; k < per_interval; ++k) {
        const int64_t start = per_interval == 1 ? *hi / 2 : (*hi * k) / (per_interval - 1);
        auto sample = sampling::make_training_sample(v, cfg.sampling, s, start, 0);
        sample.input_clip = video::apply_crop(sample.input_clip, aug, window);
        sample.ground_truth = video::apply_crop(sample.ground_truth, aug, window);
        sample.attention_source = video::apply_crop(sample.attention_source, aug, window);
        samples.push_back(std::move(sample));
      }
    }
  }
  return samples;
}

losses::LossReport compute_objective(models::PrpModel& model, const Batch& batch, const TrainConfig& cfg,
                                     nn::Mode mode, bool backprop) {
  const auto w = cfg.effective_weights();
  losses::LossReport report;
  const auto enc = model.encode(batch.inputs, mode);
  // The rate head is cheap, so its accuracy is reported in every mode.
  const Tensor logits = model.classify_rate(enc.feature_vec, mode);
  const auto ld = losses::discriminative_loss(logits, batch.rate_labels);
  report.l_d = ld.value;
  report.dp_accuracy = losses::accuracy(logits, batch.rate_labels);

  Tensor grad_logits, grad_recon;
  if (w.lambda_d > 0) {
    grad_logits = ld.grad;
    grad_logits *= w.lambda_d;
  }
  if (w.lambda_g > 0) {
    const Tensor recon = model.decode(enc.feature_map, mode);
    const auto lg = losses::generative_loss(recon, batch.ground_truth, batch.attention);
    report.l_g = lg.value;
    grad_recon = lg.grad;
    grad_recon *= w.lambda_g;
  }
  report.joint = losses::joint_loss(report.l_d, report.l_g, w);
  if (backprop) {
    model.backward(grad_logits.empty() ? nullptr : &grad_logits, grad_recon.empty() ? nullptr : &grad_recon);
  }
  return report;
}

losses::LossReport train_step(models::PrpModel& model, optim::Sgd& optimizer, const Batch& batch,
                              const TrainConfig& cfg) {
  model.zero_grad();
  const auto report = compute_objective(model, batch, cfg, nn::Mode::kTrain, true);
  if (!std::isfinite(report.joint)) {
    throw DivergenceError("training loss became non-finite (l_d=" + std::to_string(report.l_d) +
                          ", l_g=" + std::to_string(report.l_g) + ")");
  }
  optimizer.step(model.parameters());
  return report;
}

losses::LossReport validate(models::PrpModel& model, std::span<const TrainingSample> samples,
                            const TrainConfig& cfg) {
  if (samples.empty()) throw DatasetError("validation set is empty");
  losses::LossReport total;
  const size_t chunk = static_cast<size_t>(std::max(1, cfg.batch_size));
  for (size_t begin = 0; begin < samples.size(); begin += chunk) {
    const size_t end = std::min(samples.size(), begin + chunk);
    const auto part = samples.subspan(begin, end - begin);
    const Batch batch = collate(part, cfg);
    const auto r = compute_objective(model, batch, cfg, nn::Mode::kEval, false);
    const double weight = static_cast<double>(part.size());
    total.l_d += r.l_d * weight;
    total.l_g += r.l_g * weight;
    total.dp_accuracy += r.dp_accuracy * weight;
  }
  const double n = static_cast<double>(samples.size());
  total.l_d /= n;
  total.l_g /= n;
  total.dp_accuracy /= n;
  total.joint = losses::joint_loss(total.l_d, total.l_g, cfg.effective_weights());
  return total;
}

json model_snapshot(const TrainConfig& cfg) {
  return json{{"backbone", prp::to_json(cfg.backbone)},
              {"decoder", prp::to_json(cfg.decoder)},
              {"num_rate_classes", cfg.sampling.num_classes()}};
}

models::PrpModel model_from_checkpoint(const models::Checkpoint& ckpt) {
  if (!ckpt.config.contains("model")) throw ConfigError("checkpoint has no model snapshot");
  const json& m = ckpt.config.at("model");
  models::PrpModel model(backbone_from_json(m.at("backbone")), decoder_from_json(m.at("decoder")),
                         m.at("num_rate_classes").get<int>(), 0);
  model.load_state_dict(ckpt.tensors, false);
  return model;
}

namespace {

uint64_t step_seed(uint64_t seed, int epoch, int iter) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(epoch),
                    static_cast<uint32_t>(iter)};
  std::mt19937_64 rng(seq);
  return rng();
}

models::Checkpoint snapshot(models::PrpModel& model, const optim::Sgd& opt, const json& config, int epoch,
                            double val_loss) {
  models::Checkpoint ckpt;
  ckpt.kind = "pretrain";
  ckpt.config = config;
  ckpt.epoch = epoch;
  ckpt.val_loss = val_loss;
  ckpt.tensors = model.state_dict();
  for (const auto& [name, t] : opt.momentum_buffers()) ckpt.tensors["optim.momentum." + name] = t;
  return ckpt;
}

}  // namespace

PretrainResult pretrain(std::span<const RawVideo> dataset, const TrainConfig& input_cfg, const EpochCallback& on_epoch,
                        const json& config_snapshot) {
  TrainConfig cfg = input_cfg;
  cfg.resolve();
  cfg.validate();
  if (dataset.empty()) throw DatasetError("pretraining dataset is empty");

  const Split split = split_videos(dataset, cfg.val_fraction_or_count, cfg.seed);
  std::vector<RawVideo> train_videos, val_videos;
  for (size_t i : split.train) train_videos.push_back(dataset[i]);
  for (size_t i : split.val) val_videos.push_back(dataset[i]);
  const auto val_samples = make_eval_samples(val_videos, cfg, cfg.val_clips_per_interval);
  if (val_samples.empty()) throw DatasetError("no validation video is long enough for any sampling interval");

  models::PrpModel model(cfg.backbone, cfg.decoder, std::max(2, cfg.sampling.num_classes()), cfg.seed);
  optim::Sgd optimizer({cfg.learning_rate, cfg.momentum, cfg.weight_decay, cfg.grad_clip});

  json config = config_snapshot.is_null() ? json::object() : config_snapshot;
  config["model"] = model_snapshot(cfg);
  config["train_mode"] = to_string(cfg.mode);

  PretrainResult result;
  const int iters = std::max(1, static_cast<int>(train_videos.size()) / cfg.batch_size);
  double best = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    if (cfg.lr_step_epochs > 0) lr *= std::pow(cfg.lr_step_gamma, (epoch - 1) / cfg.lr_step_epochs);
    optimizer.set_learning_rate(lr);

    double train_loss = 0.0;
    for (int it = 0; it < iters; ++it) {
      const auto samples = sampling::sample_batch(train_videos, cfg.sampling, cfg.batch_size,
                                                  step_seed(cfg.seed, epoch, it), cfg.augment);
      const Batch batch = collate(samples, cfg);
      const auto report = train_step(model, optimizer, batch, cfg);
      if (epoch == 1 && it == 0) result.initial_train_loss = report.joint;
      train_loss += report.joint;
    }
    const auto val = validate(model, val_samples, cfg);
    if (!std::isfinite(val.joint)) {
      throw DivergenceError("validation loss became non-finite at epoch " + std::to_string(epoch));
    }
    EpochRecord record{epoch, train_loss / iters, val.joint, val.dp_accuracy, lr};
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);
    if (val.joint < best) {
      best = val.joint;
      result.best_epoch = epoch;
      result.checkpoint = snapshot(model, optimizer, config, epoch, val.joint);
    }
  }
  return result;
}

std::optional<double> reported_ucf101_accuracy(const AblationCell& cell) {
  const std::vector<int> s1248{1, 2, 4, 8};
  if (cell.mode == PerceptionMode::kDP) {
    if (cell.intervals == std::vector<int>{1, 2}) return 68.3;
    if (cell.intervals == std::vector<int>{1, 2, 4}) return 68.7;
    if (cell.intervals == s1248) return 69.9;
    if (cell.intervals == std::vector<int>{1, 2, 4, 8, 16}) return 67.9;
    return std::nullopt;
  }
  if (cell.intervals != s1248) return std::nullopt;
  if (cell.mode == PerceptionMode::kGP) {
    if (cell.recon_rate == 1) return cell.attention_enabled ? 68.1 : 67.1;
    if (cell.recon_rate == 2 && cell.attention_enabled) return 68.2;
    if (cell.recon_rate == 4 && cell.attention_enabled) return 68.4;
    return std::nullopt;
  }
  if (cell.recon_rate == 2 && cell.attention_enabled) return 70.9;
  return std::nullopt;
}

std::vector<AblationRow> run_ablation_grid(std::span<const RawVideo> dataset, const RunConfig& base,
                                           std::span<const AblationCell> grid) {
  if (grid.empty()) throw ConfigError("ablation grid is empty");
  std::vector<TrainConfig> configs;
  for (const auto& cell : grid) {
    TrainConfig cfg = base.train;
    cfg.mode = cell.mode;
    cfg.sampling.intervals = cell.intervals;
    cfg.sampling.recon_rate = cell.recon_rate;
    cfg.attention_enabled = cell.attention_enabled;
    cfg.resolve();
    cfg.validate();
    configs.push_back(cfg);
  }

  int num_classes = 0;
  for (const auto& v : dataset) {
    if (!v.label) throw DatasetError("ablation needs labelled videos for the downstream task");
    num_classes = std::max(num_classes, *v.label + 1);
  }
  const Split split = split_videos(dataset, 0.25, base.seed + 17);
  std::vector<RawVideo> train, test;
  for (size_t i : split.train) train.push_back(dataset[i]);
  for (size_t i : split.val) test.push_back(dataset[i]);

  std::vector<AblationRow> rows;
  for (size_t c = 0; c < grid.size(); ++c) {
    const auto result = pretrain(train, configs[c]);
    auto ft = downstream::finetune(&result.checkpoint, train, num_classes, configs[c], base.finetune);
    const auto protocol = downstream::protocol_from(configs[c], base.eval);
    const auto report = downstream::evaluate(*ft.model, test, protocol);
    AblationRow row;
    row.cell = grid[c];
    row.best_val_loss = result.checkpoint.val_loss;
    row.dp_accuracy = result.log[static_cast<size_t>(result.best_epoch - 1)].dp_accuracy;
    row.downstream_accuracy = report.video_accuracy;
    row.reported_ucf101 = reported_ucf101_accuracy(grid[c]);
    rows.push_back(row);
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << "method\tsampling_interval\treconstructing_rate\tdownstream_accuracy\treported_ucf101\n";
  for (const auto& row : rows) {
    os << (row.cell.mode == PerceptionMode::kDGP ? "DG-P" : to_string(row.cell.mode)) << "\t{";
    for (size_t i = 0; i < row.cell.intervals.size(); ++i) os << (i ? "," : "") << row.cell.intervals[i];
    os << "}\t";
    if (row.cell.mode == PerceptionMode::kDP) {
      os << "-";
    } else {
      os << row.cell.recon_rate << (row.cell.attention_enabled ? " (w/ MA)" : " (w/o MA)");
    }
    os << '\t' << row.downstream_accuracy * 100.0 << '\t';
    if (row.reported_ucf101) {
      os << *row.reported_ucf101;
    } else {
      os << "-";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace prp::training
