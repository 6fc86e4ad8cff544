#include <gtest/gtest.h>

#include <fstream>

#include "prp/config.hpp"
#include "prp/errors.hpp"
#include "test_support.hpp"

using nlohmann::json;
using namespace prp;

TEST(Profiles, PaperDefaults) {
  const RunConfig cfg = profile_defaults("paper");
  EXPECT_EQ(cfg.train.learning_rate, 0.01);
  EXPECT_EQ(cfg.train.momentum, 0.9);
  EXPECT_EQ(cfg.train.weight_decay, 0.0005);
  EXPECT_EQ(cfg.train.epochs, 300);
  EXPECT_EQ(cfg.train.val_fraction_or_count, 800);
  EXPECT_EQ(cfg.train.loss_weights.lambda_d, 0.1);
  EXPECT_EQ(cfg.train.loss_weights.lambda_g, 1.0);
  EXPECT_EQ(cfg.train.sampling.clip_len, 16);
  EXPECT_EQ(cfg.train.sampling.intervals, (std::vector<int>{1, 2, 4, 8}));
  EXPECT_EQ(cfg.train.augment.resize_hw, std::make_pair(128, 171));
  EXPECT_EQ(cfg.train.augment.crop_hw, std::make_pair(112, 112));
  EXPECT_EQ(cfg.train.attention.lambda1, 0.8);
  EXPECT_EQ(cfg.train.attention.lambda2, 2.0);
  EXPECT_EQ(cfg.train.attention.pool_kernel, (attention::Dims3{15, 28, 28}));
  EXPECT_EQ(cfg.train.attention.pool_stride, (attention::Dims3{16, 7, 7}));
  EXPECT_EQ(cfg.finetune.epochs, 150);
  EXPECT_EQ(cfg.eval.num_clips, 10);
  EXPECT_EQ(cfg.retrieval.ks, (std::vector<int>{1, 5, 10, 20, 50}));
  EXPECT_EQ(cfg.train.backbone.input_shape, (models::ClipShape{16, 112, 112, 3}));
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Profiles, DeskIsSmallAndValid) {
  const RunConfig cfg = profile_defaults("desk");
  EXPECT_EQ(cfg.train.sampling.clip_len, 8);
  EXPECT_EQ(cfg.train.backbone.input_shape, (models::ClipShape{8, 32, 32, 3}));
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_THROW(profile_defaults("laptop"), ConfigError);
}

TEST(ConfigJson, RoundTripIsStable) {
  const RunConfig cfg = profile_defaults("desk");
  const json j = to_json(cfg);
  const RunConfig back = run_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(to_json(back)), config_hash(j));
}

TEST(ConfigJson, OverlayAndResolve) {
  const RunConfig cfg = run_config_from_json(json{{"profile", "desk"},
                                                  {"seed", 42},
                                                  {"sampling", {{"clip_len", 4}, {"recon_rate", 4}}},
                                                  {"train", {{"mode", "DG-P"}, {"epochs", 3}}}});
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.train.seed, 42u);
  EXPECT_EQ(cfg.train.epochs, 3);
  EXPECT_EQ(cfg.train.mode, PerceptionMode::kDGP);
  EXPECT_EQ(cfg.train.backbone.input_shape.frames, 4);
  EXPECT_EQ(cfg.train.decoder.recon_rate, 4);
  EXPECT_EQ(cfg.train.learning_rate, 0.01);
}

TEST(ConfigJson, UnknownKeysNamed) {
  try {
    run_config_from_json(json{{"train", {{"learning_rat", 0.1}}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.learning_rat"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run_config_from_json(json{{"extra", 1}}), ConfigError);
}

TEST(ConfigJson, InvalidValuesRejected) {
  EXPECT_THROW(run_config_from_json(json{{"sampling", {{"intervals", {1, 3}}}}}).validate(), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"sampling", {{"recon_rate", 3}}}}).validate(), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"train", {{"mode", "XP"}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"train", {{"epochs", 0}}}}).validate(), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"train", {{"epochs", "many"}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"augment", {{"crop_hw", {40, 40}}}}}).validate(), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"backbone", {{"variant", "VGG"}}}}), ConfigError);
}

TEST(ConfigJson, FileLoading) {
  const auto dir = test::scratch_dir("config");
  {
    std::ofstream(dir / "ok.json") << R"({"train": {"epochs": 2}})";
    std::ofstream(dir / "bad.json") << "{ not json";
  }
  EXPECT_EQ(load_run_config((dir / "ok.json").string()).train.epochs, 2);
  EXPECT_THROW(load_run_config((dir / "bad.json").string()), ConfigError);
  EXPECT_THROW(load_run_config((dir / "missing.json").string()), ConfigError);
}

TEST(Modes, EffectiveWeights) {
  TrainConfig t = profile_defaults("desk").train;
  t.mode = PerceptionMode::kDP;
  EXPECT_EQ(t.effective_weights().lambda_g, 0.0);
  EXPECT_EQ(t.effective_weights().lambda_d, 0.1);
  t.mode = PerceptionMode::kGP;
  EXPECT_EQ(t.effective_weights().lambda_d, 0.0);
  EXPECT_EQ(t.effective_weights().lambda_g, 1.0);
  t.mode = PerceptionMode::kDGP;
  EXPECT_EQ(t.effective_weights().lambda_d, 0.1);
  EXPECT_EQ(parse_mode("DP"), PerceptionMode::kDP);
}

TEST(JsonDiff, ListsDifferingPaths) {
  const json a{{"x", 1}, {"y", {{"z", 2}, {"w", 3}}}};
  const json b{{"x", 1}, {"y", {{"z", 5}, {"w", 3}}}, {"v", 0}};
  const auto d = json_diff(a, b);
  EXPECT_EQ(d, (std::vector<std::string>{"y.z", "v"}));
}
