#include "app.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "CLI11.hpp"
#include "prp/attention.hpp"
#include "prp/checkpoint.hpp"
#include "prp/downstream.hpp"
#include "prp/errors.hpp"
#include "prp/models.hpp"
#include "prp/training.hpp"
#include "prp/video.hpp"

namespace prp::app {

namespace fs = std::filesystem;
using nlohmann::json;
using video::RawVideo;

namespace {

// Synthetic test data uses a different seed stream from the training corpus.
constexpr uint64_t kTestSeedOffset = 0x7e57;

void write_json(const fs::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw InputError("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  write_json(out / "resolved_config.json", to_json(cfg));
  return out;
}

std::vector<RawVideo> synthetic_split(const RunConfig& cfg, uint64_t seed) {
  auto videos = video::generate_synthetic_corpus(cfg.synthetic.to_spec(seed));
  const auto [h, w] = cfg.train.augment.resize_hw;
  for (auto& v : videos) {
    if (v.frames.height() != h || v.frames.width() != w) v.frames = video::resize_frames(v.frames, h, w);
  }
  return videos;
}

/// Frame-directory dataset when a root is configured, else the seeded synthetic corpus.
std::vector<RawVideo> load_split(const RunConfig& cfg, bool test) {
  const std::string& root = test ? cfg.data.test_root : cfg.data.train_root;
  if (!root.empty()) return video::load_dataset(root, cfg.train.augment.resize_hw);
  return synthetic_split(cfg, test ? cfg.seed + kTestSeedOffset : cfg.seed);
}

int label_count(std::span<const RawVideo> a, std::span<const RawVideo> b = {}) {
  int n = 0;
  for (auto span : {a, b}) {
    for (const auto& v : span) n = std::max(n, v.label.value_or(-1) + 1);
  }
  if (n == 0) throw DatasetError("dataset has no labelled videos");
  return n;
}

models::Checkpoint read_checkpoint(const Options& opts, bool required) {
  if (opts.ckpt_path.empty()) {
    if (required) throw ConfigError("--ckpt is required for this command");
    return {};
  }
  return models::load_checkpoint(opts.ckpt_path);
}

json report_metadata(const RunConfig& cfg, const Options& opts) {
  const json resolved = to_json(cfg);
  return json{{"config_hash", config_hash(resolved)},
              {"profile", cfg.profile},
              {"seed", cfg.seed},
              {"checkpoint", opts.ckpt_path},
              {"frozen_backbone", cfg.finetune.frozen_backbone},
              {"backbone", to_json(cfg.train.backbone)}};
}

models::ActionClassifier classifier_from_checkpoint(const models::Checkpoint& ckpt) {
  if (ckpt.kind != "finetune") throw ConfigError("expected a fine-tuned checkpoint, got kind '" + ckpt.kind + "'");
  const json& m = ckpt.config.at("model");
  models::ActionClassifier model(backbone_from_json(m.at("backbone")), m.at("num_classes").get<int>(), 0);
  model.load_state_dict(ckpt.tensors);
  return model;
}

void check_backbone(const json& ckpt_config, const RunConfig& cfg) {
  if (!ckpt_config.contains("model")) throw ConfigError("checkpoint has no model snapshot");
  const auto diff = json_diff(ckpt_config.at("model").at("backbone"), to_json(cfg.train.backbone), "backbone");
  if (!diff.empty()) {
    std::string msg = "checkpoint backbone is incompatible with the run config; differing keys:";
    for (const auto& k : diff) msg += " " + k;
    throw ConfigError(msg);
  }
}

std::vector<double> to_gray(const Tensor& map2d, double lo, double hi) {
  std::vector<double> out(static_cast<size_t>(map2d.numel()));
  const double range = hi - lo;
  for (int64_t i = 0; i < map2d.numel(); ++i) {
    const double v = range > 0 ? (map2d[i] - lo) / range : 0.0;
    out[static_cast<size_t>(i)] = std::clamp(v, 0.0, 1.0) * 255.0;
  }
  return out;
}

void write_rgb_png(const fs::path& file, const video::FrameSeq& frames, int64_t t) {
  cv::Mat img(static_cast<int>(frames.height()), static_cast<int>(frames.width()), CV_8UC3);
  for (int64_t y = 0; y < frames.height(); ++y) {
    for (int64_t x = 0; x < frames.width(); ++x) {
      auto& px = img.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
      for (int c = 0; c < 3; ++c) {
        const int64_t src = frames.channels() == 3 ? c : 0;
        const double v = std::clamp(static_cast<double>(frames.at(t, y, x, src)), 0.0, 1.0);
        px[2 - c] = static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(file.string(), img)) throw InputError("failed to write " + file.string());
}

}  // namespace

RunConfig resolve_options(const Options& opts) {
  RunConfig cfg = opts.config_path.empty() ? profile_defaults(opts.profile.empty() ? "desk" : opts.profile)
                                           : load_run_config(opts.config_path, opts.profile);
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  cfg.resolve();
  cfg.validate();
  return cfg;
}

int cmd_pretrain(const Options& opts) {
  const RunConfig cfg = resolve_options(opts);
  const fs::path out = prepare_out(cfg);
  const auto videos = load_split(cfg, false);

  std::ofstream log(out / "log.jsonl", std::ios::trunc);
  const auto result = training::pretrain(
      videos, cfg.train,
      [&](const training::EpochRecord& r) {
        log << training::to_json(r).dump() << '\n';
        log.flush();
        std::cout << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss
                  << " dp_accuracy " << r.dp_accuracy << '\n';
      },
      to_json(cfg));
  models::save_checkpoint(out / "best.ckpt", result.checkpoint);
  std::cout << "best epoch " << result.best_epoch << " -> " << (out / "best.ckpt").string() << '\n';
  return 0;
}

int cmd_finetune(const Options& opts) {
  const RunConfig cfg = resolve_options(opts);
  const models::Checkpoint ckpt = read_checkpoint(opts, false);
  const bool pretrained = !opts.ckpt_path.empty();
  if (pretrained) check_backbone(ckpt.config, cfg);
  const fs::path out = prepare_out(cfg);
  const auto train = load_split(cfg, false);
  const auto test = load_split(cfg, true);
  const int num_classes = label_count(train, test);

  auto result = downstream::finetune(pretrained ? &ckpt : nullptr, train, num_classes, cfg.train, cfg.finetune);
  std::ofstream log(out / "finetune_log.jsonl", std::ios::trunc);
  for (const auto& r : result.history) {
    log << json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"train_accuracy", r.train_accuracy}}.dump()
        << '\n';
  }

  models::Checkpoint saved;
  saved.kind = "finetune";
  saved.config = to_json(cfg);
  saved.config["model"] = {{"backbone", to_json(cfg.train.backbone)}, {"num_classes", num_classes}};
  saved.epoch = cfg.finetune.epochs;
  saved.tensors = result.model->state_dict();
  models::save_checkpoint(out / "finetuned.ckpt", saved);

  auto report = downstream::evaluate(*result.model, test, downstream::protocol_from(cfg.train, cfg.eval));
  report.metadata = report_metadata(cfg, opts);
  report.metadata["init"] = pretrained ? "pretrained" : "random";
  report.metadata["finetune_epochs"] = cfg.finetune.epochs;
  write_json(out / "report.json", downstream::to_json(report));
  std::cout << "clip_accuracy " << report.clip_accuracy << " video_accuracy " << report.video_accuracy << '\n';
  return 0;
}

int cmd_eval(const Options& opts) {
  const RunConfig cfg = resolve_options(opts);
  const models::Checkpoint ckpt = read_checkpoint(opts, true);
  check_backbone(ckpt.config, cfg);
  auto model = classifier_from_checkpoint(ckpt);
  const auto test = load_split(cfg, true);
  if (label_count(test) > model.num_classes()) throw ConfigError("test labels exceed the classifier's class count");
  const fs::path out = prepare_out(cfg);

  auto report = downstream::evaluate(model, test, downstream::protocol_from(cfg.train, cfg.eval));
  report.metadata = report_metadata(cfg, opts);
  if (ckpt.config.contains("finetune")) {
    report.metadata["frozen_backbone"] = ckpt.config["finetune"].value("frozen_backbone", false);
  }
  write_json(out / "report.json", downstream::to_json(report));
  std::cout << "clip_accuracy " << report.clip_accuracy << " video_accuracy " << report.video_accuracy << '\n';
  return 0;
}

int cmd_retrieve(const Options& opts) {
  const RunConfig cfg = resolve_options(opts);
  const models::Checkpoint ckpt = read_checkpoint(opts, true);
  check_backbone(ckpt.config, cfg);
  const auto train = load_split(cfg, false);
  const auto test = load_split(cfg, true);
  const fs::path out = prepare_out(cfg);
  const auto protocol = downstream::protocol_from(cfg.train, cfg.eval);

  std::optional<models::PrpModel> prp_model;
  std::optional<models::ActionClassifier> classifier;
  downstream::FeatureFn features;
  if (ckpt.kind == "finetune") {
    classifier.emplace(classifier_from_checkpoint(ckpt));
    features = downstream::feature_fn(*classifier);
  } else {
    prp_model.emplace(training::model_from_checkpoint(ckpt));
    features = downstream::feature_fn(*prp_model);
  }
  const auto index = downstream::build_retrieval_index(features, train, protocol);
  const auto queries = downstream::build_retrieval_index(features, test, protocol);
  downstream::save_retrieval_index(index, out / "index");

  downstream::EvalReport report;
  report.topk_accuracy = downstream::topk_accuracy(index, queries, cfg.retrieval.ks);
  report.metadata = report_metadata(cfg, opts);
  report.metadata["checkpoint_kind"] = ckpt.kind;
  json j = downstream::to_json(report);
  json table = json::object();
  std::string header;
  for (int k : cfg.retrieval.ks) {
    table["top" + std::to_string(k)] = report.topk_accuracy.at(k);
    header += (header.empty() ? "" : "&") + std::string("top") + std::to_string(k);
  }
  j["topk_accuracy"] = table;
  j["columns"] = header;
  write_json(out / "report.json", j);
  std::cout << header << '\n';
  for (int k : cfg.retrieval.ks) std::cout << report.topk_accuracy.at(k) << (k == cfg.retrieval.ks.back() ? "\n" : "&");
  return 0;
}

int cmd_visualize_attention(const Options& opts) {
  const RunConfig cfg = resolve_options(opts);
  if (opts.video_path.empty()) throw ConfigError("--video is required for visualize-attention");
  const models::Checkpoint ckpt = read_checkpoint(opts, true);
  check_backbone(ckpt.config, cfg);
  auto model = training::model_from_checkpoint(ckpt);
  const auto raw = video::load_frame_sequence(opts.video_path, cfg.train.augment.resize_hw);
  const fs::path out = prepare_out(cfg);

  downstream::ClipProtocol protocol = downstream::protocol_from(cfg.train);
  protocol.num_clips = 1;
  const auto padded = downstream::loop_pad(raw.frames, protocol.clip_len);
  std::vector<int64_t> idx(static_cast<size_t>(protocol.clip_len));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  const auto clip = video::apply_crop(padded.gather(idx), protocol.augment, video::center_crop_window(protocol.augment));
  const int64_t l = clip.count(), h = clip.height(), w = clip.width();

  const auto attention = attention::motion_attention(clip, cfg.train.attention, {l, h, w});
  const Tensor fmap = model.encode(models::clips_to_tensor(std::vector{clip}), nn::Mode::kEval).feature_map;
  const int64_t c5 = fmap.dim(1), t5 = fmap.dim(2), h5 = fmap.dim(3), w5 = fmap.dim(4);
  Tensor summed({1, 1, t5, h5, w5});
  for (int64_t c = 0; c < c5; ++c) {
    for (int64_t i = 0; i < t5 * h5 * w5; ++i) summed[i] += fmap[c * t5 * h5 * w5 + i];
  }
  const Tensor conv5 = trilinear_resize(summed, l, h, w);

  int written = 0;
  for (int t : cfg.visualize_frames) {
    if (t < 0 || t >= l) throw ConfigError("visualize.frames entry " + std::to_string(t) + " is outside the clip");
    const std::string stem = "frame" + std::to_string(t);
    write_rgb_png(out / (stem + "_input.png"), clip, t);

    Tensor att({h, w});
    std::copy_n(attention.weights.data() + t * h * w, h * w, att.data());
    // Weights are drawn on a 0..lambda2 scale so the neutral weight 1.0 is mid-gray.
    video::write_gray_png(out / (stem + "_attention.png"), to_gray(att, 0.0, cfg.train.attention.lambda2),
                          static_cast<int>(h), static_cast<int>(w));

    Tensor act({h, w});
    std::copy_n(conv5.data() + t * h * w, h * w, act.data());
    video::write_gray_png(out / (stem + "_conv5.png"), to_gray(act, act.min(), act.max()), static_cast<int>(h),
                          static_cast<int>(w));
    written += 3;
  }
  std::cout << "wrote " << written << " images to " << out.string() << '\n';
  return 0;
}

int cmd_gen_synthetic(const Options& opts) {
  const RunConfig cfg = resolve_options(opts);
  const fs::path out = cfg.output_dir;
  if (fs::exists(out) && !fs::is_empty(out) && !opts.force) {
    throw ConfigError("output directory " + out.string() + " is not empty (use --force to overwrite)");
  }
  if (opts.force && fs::exists(out)) fs::remove_all(out);
  const auto spec = cfg.synthetic.to_spec(cfg.seed);
  const auto videos = video::generate_synthetic_corpus(spec);
  video::write_dataset(out, videos, video::class_names(spec));
  write_json(out / "resolved_config.json", to_json(cfg));
  std::cout << "wrote " << videos.size() << " videos in " << spec.motion_classes.size() << " classes to "
            << out.string() << '\n';
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App cli{"Playback-rate perception pretraining and evaluation"};
  cli.require_subcommand(1);
  Options opts;
  std::string seed_text;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "JSON run config");
    sub->add_option("--ckpt", opts.ckpt_path, "Checkpoint file");
    sub->add_option("--out", opts.out_dir, "Output directory");
    sub->add_option("--profile", opts.profile, "Default preset")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--seed", seed_text, "Random seed");
    sub->add_flag("--force", opts.force, "Overwrite a non-empty output directory");
  };
  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Entry entries[] = {
      {"pretrain", "Pretrain on playback-rate perception", cmd_pretrain},
      {"finetune", "Fine-tune an action classifier", cmd_finetune},
      {"eval", "Evaluate a fine-tuned classifier (multi-clip protocol)", cmd_eval},
      {"retrieve", "Nearest-neighbour video retrieval", cmd_retrieve},
      {"visualize-attention", "Write input, motion-attention and conv5 maps as PNGs", cmd_visualize_attention},
      {"gen-synthetic", "Write the synthetic moving-pattern dataset", cmd_gen_synthetic},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    CLI::App* sub = cli.add_subcommand(e.name, e.help);
    add_common(sub);
    if (std::string(e.name) == "visualize-attention") sub->add_option("--video", opts.video_path, "Video or frame dir");
    subs.push_back(sub);
  }

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    if (!args.empty()) cli.name(args.front());
    cli.parse(rev);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (!seed_text.empty()) {
      size_t used = 0;
      const unsigned long long v = std::stoull(seed_text, &used);
      if (used != seed_text.size()) throw std::invalid_argument(seed_text);
      opts.seed = v;
    }
  } catch (const std::exception&) {
    std::cerr << "error: --seed expects a non-negative integer, got '" << seed_text << "'\n";
    return 1;
  }

  for (size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      return entries[i].fn(opts);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }
  return 1;
}

}  // namespace prp::app
