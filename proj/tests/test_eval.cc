// Copyright 2026 The mobfed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fixtures.h"
#include "mobfed/checkpoint.h"
#include "mobfed/errors.h"
#include "mobfed/experiment.h"
#include "mobfed/metrics.h"
#include "mobfed/rng.h"

namespace mobfed::eval {
namespace {

RankedPrediction Pred(std::vector<std::size_t> ranked, std::size_t truth) { return {std::move(ranked), truth}; }

TEST(AccAtK, Examples) {
  std::vector<RankedPrediction> one = {Pred({3, 1, 2}, 3)};
  EXPECT_EQ(AccAtK(one, 1), 1.0);
  std::vector<RankedPrediction> second = {Pred({0, 7, 1, 2, 3}, 7)};
  EXPECT_EQ(AccAtK(second, 1), 0.0);
  EXPECT_EQ(AccAtK(second, 5), 1.0);
  EXPECT_THROW(AccAtK(one, 0), ConfigError);
  EXPECT_THROW(AccAtK({}, 1), ContractError);
}

TEST(Mrr, Examples) {
  std::vector<RankedPrediction> second = {Pred({0, 7, 1}, 7)};
  EXPECT_EQ(Mrr(second), 0.5);
  std::vector<RankedPrediction> two = {Pred({5, 1, 2, 3}, 5), Pred({0, 1, 2, 9}, 9)};
  EXPECT_EQ(Mrr(two), 0.625);
  std::vector<RankedPrediction> absent = {Pred({0, 1, 2}, 4), Pred({4, 1}, 4)};
  EXPECT_EQ(Mrr(absent), 0.5);
  EXPECT_FALSE(absent[0].Rank().has_value());
  EXPECT_EQ(*absent[1].Rank(), 1u);
}

std::vector<RankedPrediction> RandomPreds(Rng& rng, std::size_t m) {
  std::vector<RankedPrediction> out;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t vocab = 2 + rng.UniformInt(60);
    std::vector<std::size_t> ids(vocab);
    std::iota(ids.begin(), ids.end(), 0);
    rng.Shuffle(ids);
    ids.resize(std::min<std::size_t>(vocab, 1 + rng.UniformInt(kMaxRank)));
    out.push_back(Pred(ids, rng.UniformInt(vocab)));
  }
  return out;
}

TEST(Metrics, MatchBruteForceOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    auto preds = RandomPreds(rng, 1 + rng.UniformInt(30));
    for (std::size_t k : {1u, 5u, 20u, 3u}) {
      std::size_t hits = 0;
      for (const auto& p : preds) {
        for (std::size_t j = 0; j < p.ranked.size() && j < k; ++j) hits += p.ranked[j] == p.truth;
      }
      EXPECT_EQ(AccAtK(preds, k), static_cast<double>(hits) / static_cast<double>(preds.size()));
    }
    double rr = 0.0;
    for (const auto& p : preds) {
      for (std::size_t j = 0; j < p.ranked.size(); ++j) {
        if (p.ranked[j] == p.truth) rr += 1.0 / static_cast<double>(j + 1);
      }
    }
    EXPECT_EQ(Mrr(preds), rr / static_cast<double>(preds.size()));
  }
}

TEST(Metrics, Monotonicity) {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    auto preds = RandomPreds(rng, 1 + rng.UniformInt(50));
    MetricsReport r = Summarize(preds);
    EXPECT_LE(r.acc1, r.acc5);
    EXPECT_LE(r.acc5, r.acc20);
    EXPECT_LE(r.acc1, r.mrr);
    EXPECT_LE(r.mrr, r.acc20);
    EXPECT_GE(r.acc1, 0.0);
    EXPECT_LE(r.acc20, 1.0);
    EXPECT_EQ(r.m, preds.size());
    for (std::size_t k = 1; k < 25; ++k) EXPECT_LE(AccAtK(preds, k), AccAtK(preds, k + 1));
  }
}

}  // namespace
}  // namespace mobfed::eval

namespace mobfed::experiment {
namespace {

ModelBundle RandomBundle(std::size_t vocab, std::size_t d_llm, std::uint64_t seed, llm::ProjectionConfig pc) {
  Rng rng(seed);
  ModelBundle b;
  llm::LMConfig lc;
  lc.vocab_size = vocab;
  lc.d_llm = d_llm;
  lc.layers = 2;
  lc.heads = 2;
  lc.ffn = 2 * d_llm;
  lc.max_len = 16;
  b.lm = std::make_shared<llm::FrozenLM>(lc, rng);
  b.lm->Freeze();
  b.psi = std::make_unique<llm::Projection>(pc, rng);
  b.head = std::make_unique<llm::OutputHead>(vocab, d_llm, rng);
  b.inj = {1, 1.0, true};
  b.signal.assign(pc.d2, 0.0);
  for (double& v : b.signal) v = 0.1 * rng.Normal();
  return b;
}

std::vector<encoding::TokenizedSequence> RandomSplit(std::size_t users, std::size_t len, std::size_t vocab,
                                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<encoding::TokenizedSequence> out(users);
  for (std::size_t u = 0; u < users; ++u) {
    out[u].user_id = "u" + std::to_string(u);
    for (std::size_t i = 0; i < len; ++i) {
      out[u].tokens.push_back(rng.UniformInt(vocab));
      out[u].time_buckets.push_back(0);
      out[u].timestamps.push_back(static_cast<std::int64_t>(i));
    }
  }
  return out;
}

TEST(Evaluate, UntrainedModelIsNearChance) {
  ModelBundle b = RandomBundle(100, 16, 3, {16, 8, 16, false, false});
  // 40 users x 10 windows x 15 queries = 6000 queries.
  auto split = RandomSplit(40, 160, 100, 4);
  eval::MetricsReport r = Evaluate(b, split, 16);
  EXPECT_EQ(r.m, 6000u);
  EXPECT_GE(r.acc1, 0.005);
  EXPECT_LE(r.acc1, 0.02);
  EXPECT_LE(r.acc1, r.acc5);
  EXPECT_LE(r.acc5, r.acc20);
  EXPECT_LE(r.acc1, r.mrr);
}

TEST(Evaluate, DeterministicAndQueryLayout) {
  ModelBundle b = RandomBundle(12, 8, 5, {16, 8, 8, false, false});
  auto split = RandomSplit(3, 21, 12, 6);
  auto p1 = Predict(b, split, 8, 20);
  auto p2 = Predict(b, split, 8, 20);
  // Two full windows of 8 per user, 7 queries each; the tail is dropped.
  ASSERT_EQ(p1.size(), 3u * 2 * 7);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_EQ(p1[i].ranked, p2[i].ranked);
    EXPECT_EQ(p1[i].ranked.size(), 12u);
  }
  EXPECT_EQ(p1[0].truth, split[0].tokens[1]);
  EXPECT_EQ(p1[7].truth, split[0].tokens[9]);
  EXPECT_EQ(Evaluate(b, split, 8).ToJson().dump(), Evaluate(b, split, 8).ToJson().dump());
  EXPECT_THROW(Evaluate(b, {}, 8), ConfigError);
}

TEST(Footprint, ClosedFormTrainableCount) {
  const std::size_t vocab = 1000;
  Rng rng(7);
  ModelBundle b;
  llm::LMConfig lc;
  lc.vocab_size = vocab;
  b.lm = std::make_shared<llm::FrozenLM>(lc, rng);
  b.lm->Freeze();
  b.psi = std::make_unique<llm::Projection>(llm::ProjectionConfig{}, rng);
  b.head = std::make_unique<llm::OutputHead>(vocab, 256, rng);
  Footprint f = CountFootprint(b);
  EXPECT_EQ(CountParameters(b.psi->Params()), 8520448u);
  EXPECT_EQ(f.trainable_count, 512u * 16384 + 512 + 256 * 512 + 256 + vocab * 256);
  EXPECT_EQ(f.param_count, CountParameters(b.lm->Params()) + f.trainable_count);
  EXPECT_EQ(f.ratio, static_cast<double>(f.trainable_count) / static_cast<double>(f.param_count));
}

TEST(Footprint, MatchesCheckpointManifests) {
  ModelBundle b = RandomBundle(20, 8, 8, {16, 8, 8, false, false});
  auto dir = std::filesystem::temp_directory_path() / "mobfed_footprint_test";
  std::filesystem::create_directories(dir);
  SaveCheckpoint(dir / "lm", b.lm->Params());
  ParamList adapters = b.psi->Params();
  adapters.push_back(&b.head->w_out);
  SaveCheckpoint(dir / "adapters", adapters);
  CheckpointManifest lm = ReadManifest(dir / "lm"), ad = ReadManifest(dir / "adapters");
  Footprint f = CountFootprint(b);
  EXPECT_EQ(f.param_count, lm.TotalParameters() + ad.TotalParameters());
  EXPECT_EQ(f.trainable_count, lm.TrainableParameters() + ad.TrainableParameters());
  EXPECT_EQ(lm.TrainableParameters(), 0u);
  EXPECT_EQ(f.ratio, static_cast<double>(ad.TotalParameters()) /
                         static_cast<double>(lm.TotalParameters() + ad.TotalParameters()));
  std::filesystem::remove_all(dir);
}

TEST(Config, DefaultsMatchPublishedHyperparameters) {
  ExperimentConfig c = ExperimentConfig::Parse("");
  EXPECT_EQ(c.d, 128u);
  EXPECT_EQ(c.hidden, 256u);
  EXPECT_EQ(c.heads, 4u);
  EXPECT_EQ(c.layers, 6u);
  EXPECT_EQ(c.lr, 1e-4);
  EXPECT_EQ(c.sigma, 0.1);
  EXPECT_EQ(c.batch, 64u);
  EXPECT_EQ(c.d1, 512u);
  EXPECT_EQ(c.d_llm, 256u);
  EXPECT_EQ(c.lm_layers, 4u);
  EXPECT_EQ(c.lm_heads, 4u);
  EXPECT_EQ(c.lk, 2u);
  EXPECT_EQ(c.adapter_lr, 1e-4);
  EXPECT_FALSE(c.ablation.any());
  EXPECT_NO_THROW(c.Validate());
  for (const char* key : {"d", "hidden", "heads", "layers", "lr", "sigma", "batch", "d1", "d_llm"}) {
    EXPECT_NE(c.Serialize().find(std::string(key) + " = "), std::string::npos) << key;
  }
}

TEST(Config, SerializeRoundTripAndHash) {
  ExperimentConfig c;
  c.Set("sigma", "0.25");
  c.Set("no_dp_noise", "true");
  c.seed = 9;
  ExperimentConfig back = ExperimentConfig::Parse(c.Serialize());
  EXPECT_EQ(back.Serialize(), c.Serialize());
  EXPECT_EQ(back.Hash(), c.Hash());
  EXPECT_EQ(back.sigma, 0.25);
  EXPECT_TRUE(back.ablation.no_dp_noise);
  ExperimentConfig other = c;
  other.seed = 10;
  EXPECT_EQ(other.Hash(), c.Hash());
  other.Set("lr", "0.001");
  EXPECT_NE(other.Hash(), c.Hash());
  EXPECT_EQ(c.Hash().size(), 16u);
}

TEST(Config, ParseCommentsAndErrors) {
  ExperimentConfig c = ExperimentConfig::Parse("# comment\n  d = 16  \n\nhidden=32 # trailing\nno_outer_product = true\n");
  EXPECT_EQ(c.d, 16u);
  EXPECT_EQ(c.hidden, 32u);
  EXPECT_TRUE(c.ablation.no_outer_product);
  EXPECT_THROW(ExperimentConfig::Parse("bogus = 1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::Parse("d = twelve\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::Parse("d 12\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::Parse("no_dp_noise = maybe\n"), ConfigError);
  ExperimentConfig bad;
  bad.lk = 5;
  EXPECT_THROW(bad.Validate(), ConfigError);
  bad = ExperimentConfig();
  bad.hidden = 10;
  EXPECT_THROW(bad.Validate(), ConfigError);
  bad = ExperimentConfig();
  bad.head_init = "random";
  EXPECT_THROW(bad.Validate(), ConfigError);
}

TEST(Ablation, ParseAndPrint) {
  Ablation none = Ablation::Parse("none");
  EXPECT_FALSE(none.any());
  EXPECT_EQ(none.ToString(), "none");
  EXPECT_FALSE(Ablation::Parse("").any());
  Ablation a = Ablation::Parse("no_outer_product, no_dp_noise");
  EXPECT_TRUE(a.no_outer_product);
  EXPECT_TRUE(a.no_dp_noise);
  EXPECT_FALSE(a.no_semantic_encoding);
  EXPECT_FALSE(a.no_projection_mlp);
  EXPECT_FALSE(a.no_llm_injection);
  EXPECT_EQ(Ablation::Parse(a.ToString()).ToString(), a.ToString());
  Ablation all = Ablation::Parse("no_semantic_encoding,no_outer_product,no_dp_noise,no_projection_mlp,no_llm_injection");
  EXPECT_EQ(Ablation::Parse(all.ToString()).ToString(), all.ToString());
  EXPECT_THROW(Ablation::Parse("no_everything"), ConfigError);
}

TEST(StageKeys, FlagsTouchOnlyTheirStage) {
  ExperimentConfig base;
  StageKeys k0 = ComputeStageKeys(base);
  auto with = [&](const char* key, const char* value) {
    ExperimentConfig c = base;
    c.Set(key, value);
    return ComputeStageKeys(c);
  };
  for (const char* flag : {"no_outer_product", "no_projection_mlp", "no_llm_injection"}) {
    StageKeys k = with(flag, "true");
    EXPECT_EQ(k.data, k0.data);
    EXPECT_EQ(k.federation, k0.federation);
    EXPECT_EQ(k.lm, k0.lm);
    EXPECT_NE(k.adapters, k0.adapters);
  }
  for (const char* flag : {"no_dp_noise", "no_semantic_encoding"}) {
    StageKeys k = with(flag, "true");
    EXPECT_EQ(k.data, k0.data);
    EXPECT_NE(k.federation, k0.federation);
    EXPECT_EQ(k.lm, k0.lm);
    EXPECT_NE(k.adapters, k0.adapters);
  }
  StageKeys seed = with("seed", "5");
  EXPECT_NE(seed.data, k0.data);
  StageKeys lm = with("lm_epochs", "1");
  EXPECT_EQ(lm.federation, k0.federation);
  EXPECT_NE(lm.lm, k0.lm);
}

TEST(Report, CsvScalesByHundred) {
  RunResult r;
  r.config_hash = "00000000deadbeef";
  r.seed = 3;
  r.metrics = {0.1234, 0.5, 0.75, 0.25, 40};
  r.footprint.param_count = 100;
  r.footprint.trainable_count = 25;
  r.footprint.ratio = 0.25;
  nlohmann::json j = r.Report();
  EXPECT_EQ(j["acc1"], 0.1234);
  EXPECT_EQ(j["m"], 40);
  EXPECT_EQ(j["config_hash"], "00000000deadbeef");
  EXPECT_FALSE(j["footprint"].contains("wall_time_s"));
  std::string csv = ReportCsv({j}, {"full"});
  std::istringstream in(csv);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "label,config_hash,seed,acc1,acc5,acc20,mrr,m,params,trainable,ratio");
  EXPECT_EQ(row, "full,00000000deadbeef,3,12.34,50.00,75.00,25.00,40,100,25,0.25");
  std::string table = ReportTable({j}, {"full"});
  EXPECT_EQ(table.front(), '#');
  EXPECT_NE(table.find("full 00000000deadbeef 3 12.34"), std::string::npos);
}

class TinyPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { pipe_ = new Pipeline(true); }
  static void TearDownTestSuite() {
    delete pipe_;
    pipe_ = nullptr;
  }
  static Pipeline* pipe_;
};
Pipeline* TinyPipeline::pipe_ = nullptr;

TEST_F(TinyPipeline, RunsAndReportsConsistentMetrics) {
  ExperimentConfig c = testfix::TinyExperiment();
  RunResult r = pipe_->Run(c);
  EXPECT_GT(r.metrics.m, 0u);
  EXPECT_LE(r.metrics.acc1, r.metrics.acc5);
  EXPECT_LE(r.metrics.acc5, r.metrics.acc20);
  EXPECT_LE(r.metrics.acc1, r.metrics.mrr);
  EXPECT_EQ(r.config_hash, c.Hash());
  EXPECT_EQ(r.lm_losses.size(), 2u);
  EXPECT_EQ(r.adapter_losses.size(), 2u);
  std::size_t psi = 8 * 16 + 8 + 8 * 8 + 8;
  EXPECT_EQ(r.footprint.trainable_count, psi + r.vocab_size * 8);
  for (const char* stage : {"data", "federation", "lm", "adapters", "eval"}) EXPECT_TRUE(r.stage_seconds.count(stage));
}

TEST_F(TinyPipeline, NoDpNoiseForcesZeroSigmaOnly) {
  ExperimentConfig c = testfix::TinyExperiment();
  c.ablation.no_dp_noise = true;
  ExperimentConfig same = testfix::TinyExperiment();
  same.sigma = 0.0;
  auto a = pipe_->Federation(c);
  auto b = pipe_->Federation(same);
  ASSERT_EQ(a->signals.size(), b->signals.size());
  for (std::size_t r = 0; r < a->signals.size(); ++r) EXPECT_EQ(a->signals[r].mean, b->signals[r].mean);
  for (const auto& bytes : a->traffic) EXPECT_EQ(DecodeClientUpdate(bytes).sigma, 0.0f);
  EXPECT_EQ(pipe_->Data(c).get(), pipe_->Data(testfix::TinyExperiment()).get());
}

TEST_F(TinyPipeline, NoOuterProductFeedsZeroSignal) {
  ExperimentConfig c = testfix::TinyExperiment();
  c.ablation.no_outer_product = true;
  ModelBundle b = pipe_->Adapters(c);
  ASSERT_EQ(b.signal.size(), 16u);
  for (double v : b.signal) EXPECT_EQ(v, 0.0);
  Tensor h = b.HTilde();
  Tensor want = b.psi->Apply(std::vector<double>(16, 0.0));
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(h[i], want[i]);
  // Upstream stages are shared with the full model.
  EXPECT_EQ(pipe_->Federation(c).get(), pipe_->Federation(testfix::TinyExperiment()).get());
  EXPECT_EQ(pipe_->LanguageModel(c).get(), pipe_->LanguageModel(testfix::TinyExperiment()).get());
}

TEST_F(TinyPipeline, NoInjectionAndLinearProjection) {
  ExperimentConfig c = testfix::TinyExperiment();
  c.ablation.no_llm_injection = true;
  ModelBundle b = pipe_->Adapters(c);
  EXPECT_FALSE(b.inj.enabled);
  EXPECT_TRUE(b.signal.empty());
  EXPECT_EQ(b.HTilde().size(), 0u);
  ExperimentConfig lin = testfix::TinyExperiment();
  lin.ablation.no_projection_mlp = true;
  ModelBundle bl = pipe_->Adapters(lin);
  EXPECT_EQ(CountParameters(bl.psi->Params()), 16u * 8 + 8);
}

TEST_F(TinyPipeline, WritesArtifactsAndReloads) {
  ExperimentConfig c = testfix::TinyExperiment(2);
  auto dir = std::filesystem::temp_directory_path() / "mobfed_tiny_run";
  std::filesystem::remove_all(dir);
  RunResult r = pipe_->Run(c, dir);
  for (const char* f : {"config.txt", "split.json", "vocab.json", "rounds.jsonl", "lm.json", "adapters.json",
                        "report.json", "report.csv", "runtime.json", "signal.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  CheckpointManifest ad = ReadManifest(dir / "adapters");
  EXPECT_EQ(ad.meta["lk"], 1);
  EXPECT_EQ(ad.meta["d"], 4);
  EXPECT_EQ(ad.meta["d1"], 8);
  EXPECT_EQ(ad.meta["d_llm"], 8);
  EXPECT_EQ(ad.meta["vocab_size"], r.vocab_size);
  EXPECT_EQ(ad.meta["scale"], 1.0);
  ExperimentConfig loaded = ExperimentConfig::Load(dir / "config.txt");
  EXPECT_EQ(loaded.Hash(), c.Hash());
  ModelBundle b = LoadBundle(dir, loaded, r.vocab_size);
  auto data = pipe_->Data(c);
  EXPECT_EQ(Evaluate(b, data->test, c.lm_window).ToJson().dump(), r.metrics.ToJson().dump());
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace mobfed::experiment
