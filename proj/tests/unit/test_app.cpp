#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "app.hpp"
#include "prp/checkpoint.hpp"
#include "prp/video.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using prp::app::run_cli;

namespace {

json tiny_doc() {
  return json{
      {"profile", "desk"},
      {"train", {{"epochs", 2}, {"batch_size", 4}, {"val_clips_per_interval", 1}}},
      {"sampling", {{"intervals", {1, 2}}, {"clip_len", 4}, {"recon_rate", 2}}},
      {"backbone", {{"block_channels", {4, 4, 8, 8, 8}}}},
      {"decoder", {{"block_channels", {8, 8, 4, 3}}}},
      {"attention", {{"pool_kernel", {3, 4, 4}}, {"pool_stride", {2, 2, 2}}}},
      {"augment", {{"resize_hw", {16, 16}}, {"crop_hw", {16, 16}}}},
      {"synthetic", {{"videos_per_class", 2}, {"frame_count", 24}, {"height", 16}, {"width", 16}}},
      {"finetune", {{"epochs", 1}, {"batch_size", 4}}},
      {"eval", {{"num_clips", 2}}},
      {"retrieval", {{"ks", {1, 5}}}},
      {"visualize", {{"frames", {0, 3}}}}};
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const auto file = dir / "config.json";
  std::ofstream(file) << doc.dump(2);
  return file;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& file) { return json::parse(slurp(file)); }

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "prp");
  return run_cli(args);
}

/// Pretrains once with the tiny config; later tests reuse the checkpoint.
struct Pretrained {
  fs::path root;
  fs::path config;
  fs::path ckpt;
};

const Pretrained& pretrained() {
  static const Pretrained p = [] {
    Pretrained out;
    out.root = prp::test::scratch_dir("app_pretrain");
    out.config = write_config(out.root, tiny_doc());
    const auto dir = out.root / "run";
    EXPECT_EQ(cli({"pretrain", "--config", out.config.string(), "--out", dir.string()}), 0);
    out.ckpt = dir / "best.ckpt";
    return out;
  }();
  return p;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}), 1);
  EXPECT_EQ(cli({"bogus"}), 1);
  EXPECT_EQ(cli({"pretrain", "--seed", "abc"}), 1);
  EXPECT_EQ(cli({"pretrain", "--profile", "huge"}), 1);
  EXPECT_EQ(cli({"--help"}), 0);
}

TEST(Cli, PretrainWritesCheckpointAndLog) {
  const auto& p = pretrained();
  ASSERT_TRUE(fs::exists(p.ckpt));
  const auto dir = p.ckpt.parent_path();
  EXPECT_TRUE(fs::exists(dir / "resolved_config.json"));
  std::ifstream log(dir / "log.jsonl");
  std::string line;
  int rows = 0;
  while (std::getline(log, line)) {
    const auto j = json::parse(line);
    EXPECT_EQ(j.at("epoch").get<int>(), ++rows);
    EXPECT_TRUE(j.contains("train_loss") && j.contains("val_loss") && j.contains("dp_accuracy"));
  }
  EXPECT_EQ(rows, 2);
  EXPECT_EQ(prp::models::load_checkpoint(p.ckpt).kind, "pretrain");
}

TEST(Cli, PretrainIsDeterministic) {
  const auto& p = pretrained();
  const auto dir = prp::test::scratch_dir("app_repeat");
  ASSERT_EQ(cli({"pretrain", "--config", p.config.string(), "--out", dir.string()}), 0);
  EXPECT_EQ(slurp(dir / "log.jsonl"), slurp(p.ckpt.parent_path() / "log.jsonl"));
  // Checkpoint headers embed the output directory, so compare contents instead of bytes.
  const auto a = prp::models::load_checkpoint(dir / "best.ckpt");
  const auto b = prp::models::load_checkpoint(p.ckpt);
  EXPECT_EQ(a.epoch, b.epoch);
  EXPECT_EQ(a.val_loss, b.val_loss);
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (const auto& [k, v] : a.tensors) {
    const auto& w = b.tensors.at(k);
    EXPECT_TRUE(std::equal(v.values().begin(), v.values().end(), w.values().begin(), w.values().end())) << k;
  }
}

TEST(Cli, ConfigErrorsExitOne) {
  const auto dir = prp::test::scratch_dir("app_badcfg");
  auto doc = tiny_doc();
  doc["sampling"]["intervals"] = {1, 3};
  EXPECT_EQ(cli({"pretrain", "--config", write_config(dir, doc).string(), "--out", (dir / "o").string()}), 1);
  doc = tiny_doc();
  doc["train"]["bogus"] = 1;
  EXPECT_EQ(cli({"pretrain", "--config", write_config(dir, doc).string(), "--out", (dir / "o").string()}), 1);
  EXPECT_EQ(cli({"eval", "--config", write_config(dir, tiny_doc()).string(), "--out", (dir / "o").string()}), 1);
}

TEST(Cli, IncompatibleCheckpointIsRejected) {
  const auto& p = pretrained();
  const auto dir = prp::test::scratch_dir("app_incompat");
  auto doc = tiny_doc();
  doc["backbone"]["block_channels"] = {4, 4, 8, 8, 6};
  const auto cfg = write_config(dir, doc);
  EXPECT_EQ(cli({"finetune", "--config", cfg.string(), "--ckpt", p.ckpt.string(), "--out", (dir / "o").string()}),
            1);
}

TEST(Cli, FinetuneEvalAndFrozenMetadata) {
  const auto& p = pretrained();
  const auto dir = prp::test::scratch_dir("app_finetune");
  ASSERT_EQ(cli({"finetune", "--config", p.config.string(), "--ckpt", p.ckpt.string(), "--out",
                 (dir / "full").string()}),
            0);
  auto doc = tiny_doc();
  doc["finetune"]["frozen_backbone"] = true;
  const auto frozen_cfg = write_config(dir, doc);
  ASSERT_EQ(cli({"finetune", "--config", frozen_cfg.string(), "--ckpt", p.ckpt.string(), "--out",
                 (dir / "frozen").string()}),
            0);
  const auto full = read_json(dir / "full" / "report.json");
  const auto frozen = read_json(dir / "frozen" / "report.json");
  EXPECT_FALSE(full["metadata"]["frozen_backbone"].get<bool>());
  EXPECT_TRUE(frozen["metadata"]["frozen_backbone"].get<bool>());
  EXPECT_NE(full["metadata"]["config_hash"], frozen["metadata"]["config_hash"]);
  EXPECT_EQ(full["metadata"]["init"], "pretrained");
  const double acc = full["video_accuracy"].get<double>();
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);

  const auto ft_ckpt = dir / "full" / "finetuned.ckpt";
  ASSERT_EQ(cli({"eval", "--config", p.config.string(), "--ckpt", ft_ckpt.string(), "--out",
                 (dir / "eval").string()}),
            0);
  const auto report = read_json(dir / "eval" / "report.json");
  EXPECT_EQ(report["video_accuracy"], full["video_accuracy"]);
  EXPECT_TRUE(report.contains("clip_accuracy"));

  // A pretraining checkpoint is not a classifier.
  EXPECT_EQ(cli({"eval", "--config", p.config.string(), "--ckpt", p.ckpt.string(), "--out",
                 (dir / "eval2").string()}),
            1);
}

TEST(Cli, EvalOnEmptyDatasetFails) {
  const auto& p = pretrained();
  const auto dir = prp::test::scratch_dir("app_empty");
  ASSERT_EQ(cli({"finetune", "--config", p.config.string(), "--out", (dir / "ft").string()}), 0);
  fs::create_directories(dir / "empty");
  auto doc = tiny_doc();
  doc["data"] = {{"train_root", ""}, {"test_root", (dir / "empty").string()}};
  const auto cfg = write_config(dir, doc);
  const int code = cli({"eval", "--config", cfg.string(), "--ckpt", (dir / "ft" / "finetuned.ckpt").string(), "--out",
                        (dir / "o").string()});
  EXPECT_NE(code, 0);
}

TEST(Cli, RetrieveReportColumns) {
  const auto& p = pretrained();
  const auto dir = prp::test::scratch_dir("app_retrieve");
  ASSERT_EQ(cli({"retrieve", "--config", p.config.string(), "--ckpt", p.ckpt.string(), "--out", dir.string()}), 0);
  const auto report = read_json(dir / "report.json");
  EXPECT_EQ(report["columns"], "top1&top5");
  const double t1 = report["topk_accuracy"]["top1"].get<double>();
  const double t5 = report["topk_accuracy"]["top5"].get<double>();
  EXPECT_LE(t1, t5);
  EXPECT_TRUE(fs::exists(dir / "index" / "features.bin"));
  EXPECT_TRUE(fs::exists(dir / "index" / "index.json"));
}

TEST(Cli, RetrieveDefaultColumns) {
  const auto& p = pretrained();
  const auto dir = prp::test::scratch_dir("app_retrieve50");
  auto doc = tiny_doc();
  doc["retrieval"]["ks"] = {1, 5, 10, 20, 50};
  doc["synthetic"]["videos_per_class"] = 7;  // 56 index videos
  doc["eval"]["num_clips"] = 1;
  const auto cfg = write_config(dir, doc);
  ASSERT_EQ(cli({"retrieve", "--config", cfg.string(), "--ckpt", p.ckpt.string(), "--out", (dir / "o").string()}),
            0);
  const auto report = read_json(dir / "o" / "report.json");
  EXPECT_EQ(report["columns"], "top1&top5&top10&top20&top50");
  double prev = 0.0;
  for (const char* k : {"top1", "top5", "top10", "top20", "top50"}) {
    const double v = report["topk_accuracy"][k].get<double>();
    EXPECT_GE(v, prev) << k;
    prev = v;
  }
}

TEST(Cli, VisualizeAttention) {
  const auto& p = pretrained();
  const auto dir = prp::test::scratch_dir("app_vis");
  prp::video::write_frame_sequence(prp::test::constant_frames(6, 16, 16, 3, 0.5f), dir / "static");
  EXPECT_EQ(cli({"visualize-attention", "--config", p.config.string(), "--ckpt", p.ckpt.string(), "--out",
                 (dir / "o").string()}),
            1);
  ASSERT_EQ(cli({"visualize-attention", "--config", p.config.string(), "--ckpt", p.ckpt.string(), "--video",
                 (dir / "static").string(), "--out", (dir / "o").string()}),
            0);
  for (int t : {0, 3}) {
    for (const char* kind : {"input", "attention", "conv5"}) {
      EXPECT_TRUE(fs::exists(dir / "o" / ("frame" + std::to_string(t) + "_" + kind + ".png"))) << t << kind;
    }
  }
  // A static clip has neutral weight 1.0 everywhere, drawn as mid-gray.
  const cv::Mat att = cv::imread((dir / "o" / "frame0_attention.png").string(), cv::IMREAD_GRAYSCALE);
  ASSERT_FALSE(att.empty());
  double lo = 0, hi = 0;
  cv::minMaxLoc(att, &lo, &hi);
  EXPECT_EQ(lo, hi);
  EXPECT_NEAR(lo, 127.5, 0.6);

}

TEST(Cli, VisualizeConv5Stretch) {
  // At 64x64 the conv5 map keeps a 2x2 spatial grid, so the upsampled map is not constant.
  const auto dir = prp::test::scratch_dir("app_vis_moving");
  auto doc = tiny_doc();
  doc["train"]["epochs"] = 1;
  doc["augment"] = {{"resize_hw", {64, 64}}, {"crop_hw", {64, 64}}};
  doc["synthetic"]["height"] = 64;
  doc["synthetic"]["width"] = 64;
  const auto cfg = write_config(dir, doc);
  ASSERT_EQ(cli({"pretrain", "--config", cfg.string(), "--out", (dir / "pre").string()}), 0);
  prp::video::SyntheticSpec spec;
  spec.frame_count = 8;
  spec.height = spec.width = 64;
  prp::video::write_frame_sequence(prp::video::generate_synthetic_video(spec, 0).frames, dir / "v");
  ASSERT_EQ(cli({"visualize-attention", "--config", cfg.string(), "--ckpt", (dir / "pre" / "best.ckpt").string(),
                 "--video", (dir / "v").string(), "--out", (dir / "o").string()}),
            0);
  const cv::Mat conv5 = cv::imread((dir / "o" / "frame0_conv5.png").string(), cv::IMREAD_GRAYSCALE);
  ASSERT_FALSE(conv5.empty());
  double lo = 0, hi = 0;
  cv::minMaxLoc(conv5, &lo, &hi);
  EXPECT_EQ(lo, 0);
  EXPECT_EQ(hi, 255);
  EXPECT_EQ(conv5.rows, 64);
  const cv::Mat input = cv::imread((dir / "o" / "frame0_input.png").string(), cv::IMREAD_COLOR);
  EXPECT_EQ(input.channels(), 3);
}

TEST(Cli, GenSynthetic) {
  const auto dir = prp::test::scratch_dir("app_gen");
  json doc = {{"profile", "desk"}, {"synthetic", {{"videos_per_class", 10}, {"frame_count", 12}}}};
  const auto cfg = write_config(dir, doc);
  const auto a = dir / "a";
  ASSERT_EQ(cli({"gen-synthetic", "--config", cfg.string(), "--out", a.string(), "--seed", "3"}), 0);
  const auto listing = prp::video::list_dataset(a);
  EXPECT_EQ(listing.class_names.size(), 8u);
  EXPECT_EQ(listing.videos.size(), 80u);
  std::ifstream classes(a / "classes.txt");
  int lines = 0;
  for (std::string line; std::getline(classes, line);) lines += line.empty() ? 0 : 1;
  EXPECT_EQ(lines, 8);

  EXPECT_EQ(cli({"gen-synthetic", "--config", cfg.string(), "--out", a.string(), "--seed", "3"}), 1);

  const auto b = dir / "b";
  ASSERT_EQ(cli({"gen-synthetic", "--config", cfg.string(), "--out", b.string(), "--seed", "3"}), 0);
  const auto first = listing.videos.front();
  const auto rel = fs::relative(first.path, a);
  for (const auto& entry : fs::directory_iterator(first.path)) {
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel / entry.path().filename())) << entry.path();
  }
  ASSERT_EQ(cli({"gen-synthetic", "--config", cfg.string(), "--out", a.string(), "--seed", "4", "--force"}), 0);
  EXPECT_EQ(prp::video::list_dataset(a).videos.size(), 80u);
}
