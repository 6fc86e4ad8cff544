#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "prp/errors.hpp"
#include "prp/training.hpp"
#include "tiny_setup.hpp"

using namespace prp;
using namespace prp::training;

namespace {

std::vector<video::RawVideo> tiny_corpus(int per_class = 1, uint64_t seed = 0) {
  return video::generate_synthetic_corpus(test::tiny_corpus_spec(per_class, seed));
}

}  // namespace

TEST(Collate, ShapesAndAttention) {
  auto cfg = test::tiny_train_config();
  const auto videos = tiny_corpus();
  const auto samples = sampling::sample_batch(videos, cfg.sampling, 3, 1, cfg.augment);
  const Batch b = collate(samples, cfg);
  EXPECT_EQ(b.inputs.shape(), (Shape{3, 3, 4, 16, 16}));
  EXPECT_EQ(b.ground_truth.shape(), (Shape{3, 3, 8, 16, 16}));
  EXPECT_EQ(b.attention.shape(), (Shape{3, 1, 8, 16, 16}));
  EXPECT_GE(b.attention.min(), 0.8);
  EXPECT_LE(b.attention.max(), 2.0);

  cfg.attention_enabled = false;
  EXPECT_EQ(collate(samples, cfg).attention.min(), 1.0);
  cfg.mode = PerceptionMode::kDP;
  EXPECT_TRUE(collate(samples, cfg).attention.empty());
}

TEST(Split, StratifiedAndDeterministic) {
  const auto videos = tiny_corpus(4);
  const auto a = split_videos(videos, 0.25, 3);
  const auto b = split_videos(videos, 0.25, 3);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.val.size(), 8u);
  EXPECT_EQ(a.train.size(), 24u);
  std::map<int, int> per_label;
  for (size_t i : a.val) ++per_label[*videos[i].label];
  EXPECT_EQ(per_label.size(), 8u);
  EXPECT_EQ(split_videos(videos, 5, 3).val.size(), 5u);
  EXPECT_NE(split_videos(videos, 0.25, 4).val, a.val);
}

TEST(Validate, PerfectAndChanceAccuracy) {
  auto cfg = test::tiny_train_config();
  cfg.sampling.intervals = {1, 2, 4, 8};
  cfg.resolve();
  const auto videos = video::generate_synthetic_corpus(test::tiny_corpus_spec(4, 5, 40));
  const auto samples = make_eval_samples(videos, cfg, 4);
  ASSERT_GE(samples.size(), 400u);
  models::PrpModel model(cfg.backbone, cfg.decoder, 4, 9);
  const auto r = validate(model, samples, cfg);
  EXPECT_NEAR(r.dp_accuracy, 0.25, 0.1);

  // a rate head that reads the answer off the labels scores 1.0
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.rate_class);
  Tensor oracle({static_cast<int64_t>(labels.size()), 4}, 0.0);
  for (size_t i = 0; i < labels.size(); ++i) oracle[static_cast<int64_t>(i) * 4 + labels[i]] = 5.0;
  EXPECT_EQ(losses::accuracy(oracle, labels), 1.0);
}

TEST(Validate, TwoClassChance) {
  auto cfg = test::tiny_train_config();
  const auto videos = video::generate_synthetic_corpus(test::tiny_corpus_spec(4, 6, 40));
  const auto samples = make_eval_samples(videos, cfg, 8);
  models::PrpModel model(cfg.backbone, cfg.decoder, 2, 10);
  EXPECT_NEAR(validate(model, samples, cfg).dp_accuracy, 0.5, 0.1);
}

TEST(TrainStep, ZeroLearningRateKeepsParameters) {
  auto cfg = test::tiny_train_config();
  cfg.learning_rate = 0.0;
  const auto videos = tiny_corpus();
  models::PrpModel model(cfg.backbone, cfg.decoder, 2, 1);
  std::map<std::string, Tensor> before;
  for (auto& [name, p] : model.parameters()) before[name] = p->value;
  optim::Sgd opt({0.0, cfg.momentum, cfg.weight_decay, 0.0});
  for (int i = 0; i < 3; ++i) {
    const auto batch = collate(sampling::sample_batch(videos, cfg.sampling, 4, static_cast<uint64_t>(i)), cfg);
    train_step(model, opt, batch, cfg);
  }
  for (auto& [name, p] : model.parameters()) {
    const auto& b = before.at(name);
    ASSERT_TRUE(std::equal(b.values().begin(), b.values().end(), p->value.values().begin())) << name;
  }
}

TEST(TrainStep, NonFiniteLossIsDivergence) {
  auto cfg = test::tiny_train_config();
  const auto videos = tiny_corpus();
  models::PrpModel model(cfg.backbone, cfg.decoder, 2, 1);
  optim::Sgd opt({0.01, 0.9, 0.0, 0.0});
  auto batch = collate(sampling::sample_batch(videos, cfg.sampling, 2, 0), cfg);
  batch.ground_truth[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train_step(model, opt, batch, cfg), DivergenceError);
}

TEST(Pretrain, OverfitsTinyCorpus) {
  auto cfg = test::tiny_train_config(2);
  cfg.epochs = 50;
  cfg.batch_size = 8;
  const auto videos = tiny_corpus();
  const auto result = pretrain(videos, cfg);
  ASSERT_EQ(result.log.size(), 50u);
  EXPECT_LT(result.log.back().train_loss, 0.5 * result.initial_train_loss)
      << "initial " << result.initial_train_loss << " final " << result.log.back().train_loss;
}

TEST(Pretrain, KeepsLowestValidationCheckpoint) {
  auto cfg = test::tiny_train_config(4);
  cfg.epochs = 4;
  const auto videos = tiny_corpus(2);
  const auto result = pretrain(videos, cfg);
  double best = 1e300;
  for (const auto& r : result.log) best = std::min(best, r.val_loss);
  EXPECT_EQ(result.checkpoint.val_loss, best);
  EXPECT_EQ(result.log[static_cast<size_t>(result.best_epoch - 1)].val_loss, best);
  EXPECT_EQ(result.checkpoint.epoch, result.best_epoch);
  EXPECT_TRUE(result.checkpoint.config.contains("model"));
  bool has_momentum = false;
  for (const auto& [k, v] : result.checkpoint.tensors) has_momentum |= k.rfind("optim.momentum.", 0) == 0;
  EXPECT_TRUE(has_momentum);
  auto model = model_from_checkpoint(result.checkpoint);
  EXPECT_EQ(model.num_rate_classes(), 2);
}

TEST(Pretrain, DeterministicReplay) {
  auto cfg = test::tiny_train_config(7);
  cfg.epochs = 3;
  const auto videos = tiny_corpus(2);
  const auto a = pretrain(videos, cfg);
  const auto b = pretrain(videos, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_loss, b.log[i].val_loss);
  }
}

TEST(Pretrain, ModesAndErrors) {
  auto cfg = test::tiny_train_config();
  const auto videos = tiny_corpus();
  for (auto mode : {PerceptionMode::kDP, PerceptionMode::kGP}) {
    cfg.mode = mode;
    const auto r = pretrain(videos, cfg);
    EXPECT_TRUE(std::isfinite(r.log[0].val_loss));
  }
  std::vector<video::RawVideo> none;
  EXPECT_THROW(pretrain(none, cfg), DatasetError);
  cfg.epochs = 0;
  EXPECT_THROW(pretrain(videos, cfg), ConfigError);
}

TEST(Ablation, ReportedReferenceValues) {
  EXPECT_EQ(reported_ucf101_accuracy({PerceptionMode::kGP, {1, 2, 4, 8}, 1, false}), 67.1);
  EXPECT_EQ(reported_ucf101_accuracy({PerceptionMode::kGP, {1, 2, 4, 8}, 1, true}), 68.1);
  EXPECT_EQ(reported_ucf101_accuracy({PerceptionMode::kDGP, {1, 2, 4, 8}, 2, true}), 70.9);
  EXPECT_EQ(reported_ucf101_accuracy({PerceptionMode::kDP, {1, 2, 4, 8}, 2, true}), 69.9);
  EXPECT_FALSE(reported_ucf101_accuracy({PerceptionMode::kDGP, {1, 2}, 2, true}));
}

TEST(Ablation, OneRowPerCellAndValidationFirst) {
  RunConfig base = profile_defaults("desk");
  base.train = test::tiny_train_config();
  base.finetune.epochs = 1;
  base.eval.num_clips = 2;
  const auto videos = tiny_corpus(2);
  const std::vector<AblationCell> grid{{PerceptionMode::kGP, {1, 2}, 1, false}, {PerceptionMode::kGP, {1, 2}, 1, true}};
  const auto rows = run_ablation_grid(videos, base, grid);
  ASSERT_EQ(rows.size(), 2u);
  const std::string table = format_ablation_table(rows);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  EXPECT_EQ(table.rfind("method\tsampling_interval\treconstructing_rate\tdownstream_accuracy", 0), 0u);

  const std::vector<AblationCell> bad{{PerceptionMode::kGP, {1, 2}, 1, true}, {PerceptionMode::kDGP, {1, 2}, 3, true}};
  EXPECT_THROW(run_ablation_grid(videos, base, bad), ConfigError);
  EXPECT_THROW(run_ablation_grid(videos, base, {}), ConfigError);
}
