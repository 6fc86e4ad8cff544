#include <gtest/gtest.h>

#include <numeric>

#include "prp/downstream.hpp"
#include "prp/errors.hpp"
#include "prp/losses.hpp"
#include "prp/training.hpp"
#include "sampling_oracle.hpp"
#include "test_support.hpp"
#include "tiny_setup.hpp"

using namespace prp;
using namespace prp::downstream;

namespace {

RetrievalIndex hand_index(std::vector<std::vector<double>> features, std::vector<int> labels) {
  RetrievalIndex index;
  index.feature_dim = static_cast<int64_t>(features[0].size());
  for (size_t i = 0; i < features.size(); ++i) {
    index.entries.push_back({"v" + std::to_string(i + 1), labels[i], features[i]});
  }
  return index;
}

std::map<std::string, Tensor> snapshot(models::ActionClassifier& m, bool backbone) {
  std::map<std::string, Tensor> out;
  for (auto& [name, p] : m.parameters(true)) {
    if ((name.rfind("encoder.", 0) == 0) == backbone) out[name] = p->value;
  }
  return out;
}

bool same(const std::map<std::string, Tensor>& a, const std::map<std::string, Tensor>& b) {
  for (const auto& [k, v] : a) {
    const auto& w = b.at(k);
    if (!std::equal(v.values().begin(), v.values().end(), w.values().begin())) return false;
  }
  return true;
}

}  // namespace

TEST(ClipProtocol, StartsSpanTheVideo) {
  const auto s = clip_starts(100, 16, 10);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_EQ(s.front(), 0);
  EXPECT_EQ(s.back(), 84);
  for (size_t i = 1; i < s.size(); ++i) EXPECT_GT(s[i], s[i - 1]);
  EXPECT_EQ(clip_starts(10, 16, 10), std::vector<int64_t>(10, 0));
  EXPECT_EQ(clip_starts(40, 16, 1), std::vector<int64_t>{12});
}

TEST(ClipProtocol, LoopPadding) {
  const auto v = test::indexed_video(3);
  const auto p = loop_pad(v.frames, 7);
  ASSERT_EQ(p.count(), 7);
  for (int64_t t = 0; t < 7; ++t) EXPECT_EQ(test::frame_copy(p, t), test::frame_copy(v.frames, t % 3));
  EXPECT_EQ(loop_pad(v.frames, 2), v.frames);
}

TEST(Evaluate, AveragesProbabilitiesNotLogits) {
  const auto [cls, mean] = average_clip_probabilities(Tensor({2, 2}, {0.6, 0.4, 0.2, 0.8}));
  EXPECT_EQ(cls, 1);
  EXPECT_NEAR(mean[0], 0.4, 1e-12);
  EXPECT_NEAR(mean[1], 0.6, 1e-12);
}

TEST(Evaluate, StaticVideoMatchesSingleClip) {
  auto cfg = test::tiny_train_config();
  models::ActionClassifier model(cfg.backbone, 8, 3);
  video::RawVideo v{test::constant_frames(30, 16, 16, 3, 0.4f), "static", 0};
  const auto protocol = protocol_from(cfg);
  const int ten = evaluate_10clip(model, v, protocol);
  auto single = protocol;
  single.num_clips = 1;
  EXPECT_EQ(ten, evaluate_10clip(model, v, single));
  const auto clip = eval_clips(v, single)[0];
  const Tensor logits = model.forward(models::clip_to_tensor(clip).reshaped({1, 3, 4, 16, 16}), nn::Mode::kEval);
  const Tensor p = losses::softmax(logits);
  EXPECT_EQ(ten, static_cast<int>(std::max_element(p.data(), p.data() + 8) - p.data()));
}

TEST(Finetune, ZeroEpochsReturnsInitialization) {
  auto cfg = test::tiny_train_config();
  FinetuneConfig ft;
  ft.epochs = 0;
  ft.seed = 5;
  const auto videos = video::generate_synthetic_corpus(test::tiny_corpus_spec());
  auto a = finetune(nullptr, videos, 8, cfg, ft);
  auto b = finetune(nullptr, videos, 8, cfg, ft);
  EXPECT_TRUE(a.history.empty());
  EXPECT_TRUE(same(snapshot(*a.model, true), snapshot(*b.model, true)));
  EXPECT_TRUE(same(snapshot(*a.model, false), snapshot(*b.model, false)));
}

TEST(Finetune, FrozenBackboneOnlyMovesHead) {
  auto cfg = test::tiny_train_config();
  FinetuneConfig ft;
  ft.epochs = 0;
  const auto videos = video::generate_synthetic_corpus(test::tiny_corpus_spec());
  auto init = finetune(nullptr, videos, 8, cfg, ft);
  ft.epochs = 2;
  ft.frozen_backbone = true;
  auto frozen = finetune(nullptr, videos, 8, cfg, ft);
  EXPECT_TRUE(same(snapshot(*init.model, true), snapshot(*frozen.model, true)));
  EXPECT_FALSE(same(snapshot(*init.model, false), snapshot(*frozen.model, false)));
  ft.frozen_backbone = false;
  auto full = finetune(nullptr, videos, 8, cfg, ft);
  EXPECT_FALSE(same(snapshot(*init.model, true), snapshot(*full.model, true)));
  EXPECT_EQ(full.history.size(), 2u);
}

TEST(Finetune, LoadsPretrainedEncoderAndChecksShapes) {
  auto cfg = test::tiny_train_config();
  const auto videos = video::generate_synthetic_corpus(test::tiny_corpus_spec());
  const auto pre = training::pretrain(videos, cfg);
  FinetuneConfig ft;
  ft.epochs = 0;
  auto result = finetune(&pre.checkpoint, videos, 8, cfg, ft);
  auto enc = snapshot(*result.model, true);
  for (const auto& [k, v] : enc) {
    const auto& w = pre.checkpoint.tensors.at(k);
    EXPECT_TRUE(std::equal(v.values().begin(), v.values().end(), w.values().begin())) << k;
  }

  auto other = cfg;
  other.backbone.block_channels[4] = 6;
  try {
    finetune(&pre.checkpoint, videos, 8, other, ft);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("backbone.block_channels"), std::string::npos) << e.what();
  }
  EXPECT_THROW(finetune(nullptr, videos, 4, cfg, ft), ConfigError);
}

TEST(Retrieval, HandBuiltRanking) {
  const double h = 1.0 / std::sqrt(2.0);
  const auto index = hand_index({{1, 0}, {0, 1}, {h, h}}, {0, 1, 2});
  const std::vector<double> q{1, 0};
  const std::vector<int> ks{1, 2, 3};
  const auto r = retrieve_topk(index, q, 1, ks);
  EXPECT_EQ(r.ranking, (std::vector<size_t>{0, 2, 1}));
  EXPECT_NEAR(r.similarity[0], 1.0, 1e-12);
  EXPECT_NEAR(r.similarity[1], h, 1e-12);
  EXPECT_NEAR(r.similarity[2], 0.0, 1e-12);
  EXPECT_FALSE(r.hits.at(1));
  EXPECT_FALSE(r.hits.at(2));
  EXPECT_TRUE(r.hits.at(3));
  const std::vector<int> too_big{4};
  EXPECT_THROW(retrieve_topk(index, q, 1, too_big), InputError);
}

TEST(Retrieval, TiesBrokenById) {
  auto index = hand_index({{1, 0}, {1, 0}, {1, 0}}, {0, 0, 0});
  index.entries[0].video_id = "c";
  index.entries[1].video_id = "a";
  index.entries[2].video_id = "b";
  const std::vector<double> q{1, 0};
  const std::vector<int> ks{1};
  EXPECT_EQ(retrieve_topk(index, q, 0, ks).ranking, (std::vector<size_t>{1, 2, 0}));
}

TEST(Retrieval, IndexFromModel) {
  auto cfg = test::tiny_train_config();
  models::ActionClassifier model(cfg.backbone, 8, 3);
  auto videos = video::generate_synthetic_corpus(test::tiny_corpus_spec());
  auto dup = videos[2];
  dup.source_id = "duplicate";
  videos.push_back(dup);
  auto protocol = protocol_from(cfg);
  protocol.num_clips = 3;
  const auto index = build_retrieval_index(feature_fn(model), videos, protocol);
  ASSERT_EQ(index.entries.size(), videos.size());
  for (const auto& e : index.entries) {
    const double norm = std::sqrt(std::inner_product(e.feature.begin(), e.feature.end(), e.feature.begin(), 0.0));
    EXPECT_NEAR(norm, 1.0, 1e-6);
  }
  EXPECT_NEAR(cosine_similarity(index.entries[2].feature, index.entries.back().feature), 1.0, 1e-12);
  const std::vector<int> ks{1, 5};
  const auto r = retrieve_topk(index, videos[4], feature_fn(model), protocol, ks);
  EXPECT_TRUE(r.hits.at(1));
  EXPECT_EQ(index.entries[r.ranking[0]].video_id, videos[4].source_id);
  EXPECT_EQ(index.config["layer"], "conv5");
}

TEST(Retrieval, TopkMonotoneAndFullIndexIsPerfect) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  RetrievalIndex index, queries;
  index.feature_dim = queries.feature_dim = 6;
  for (int i = 0; i < 60; ++i) {
    std::vector<double> f(6);
    for (auto& v : f) v = n(rng);
    index.entries.push_back({"i" + std::to_string(i), i % 5, f});
    for (auto& v : f) v = n(rng);
    queries.entries.push_back({"q" + std::to_string(i), (i * 7) % 5, f});
  }
  const std::vector<int> ks{1, 5, 10, 20, 50, 60};
  const auto acc = topk_accuracy(index, queries, ks);
  for (size_t i = 1; i < ks.size(); ++i) EXPECT_GE(acc.at(ks[i]), acc.at(ks[i - 1]));
  EXPECT_EQ(acc.at(60), 1.0);
}

TEST(Retrieval, PersistRoundTrip) {
  const auto index = hand_index({{1, 2, 3}, {4, 5, 6}}, {3, 4});
  const auto dir = test::scratch_dir("index");
  save_retrieval_index(index, dir);
  const auto back = load_retrieval_index(dir);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.feature_dim, 3);
  EXPECT_EQ(back.entries[1].video_id, "v2");
  EXPECT_EQ(back.entries[1].label, 4);
  EXPECT_EQ(back.entries[1].feature, (std::vector<double>{4, 5, 6}));
}

TEST(Retrieval, IndexValidation) {
  auto index = hand_index({{1, 2}, {3, 4}}, {0, 1});
  index.entries[1].video_id = "v1";
  EXPECT_THROW(index.validate(), InputError);
  auto mixed = hand_index({{1, 2}, {3, 4}}, {0, 1});
  mixed.entries[1].feature.push_back(5);
  EXPECT_THROW(mixed.validate(), InputError);
}

TEST(Report, TopkKeysInColumnOrder) {
  EvalReport r;
  r.topk_accuracy = {{1, 0.1}, {5, 0.2}, {10, 0.3}, {20, 0.4}, {50, 0.5}};
  const auto j = to_json(r);
  std::vector<std::string> keys;
  for (auto it = j["topk_accuracy"].begin(); it != j["topk_accuracy"].end(); ++it) keys.push_back(it.key());
  std::sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) {
    return std::stoi(a.substr(3)) < std::stoi(b.substr(3));
  });
  EXPECT_EQ(keys, (std::vector<std::string>{"top1", "top5", "top10", "top20", "top50"}));
}
