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

// End-to-end experiment: data -> federation -> LM pretraining -> adapter
// training -> evaluation.
//
// Stages are cached in memory by the config keys they read, so runs that
// differ only in a downstream setting (most ablations) share upstream work.

#ifndef MOBFED_EXPERIMENT_H_
#define MOBFED_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mobfed/encoding.h"
#include "mobfed/filters.h"
#include "mobfed/llm.h"
#include "mobfed/metrics.h"
#include "mobfed/server.h"

namespace mobfed::experiment {

struct Ablation {
  bool no_semantic_encoding = false;
  bool no_outer_product = false;
  bool no_dp_noise = false;
  bool no_projection_mlp = false;
  bool no_llm_injection = false;

  // Comma-separated flag names; "" or "none" is the full model.
  static Ablation Parse(std::string_view csv);
  std::string ToString() const;
  bool any() const;
};

struct ExperimentConfig {
  // data
  std::string source = "synth";  // synth | file
  std::string data_path;
  std::string data_format = "brightkite_gowalla_tsv";  // or weeplace_csv, foursquare_tsv, canonical
  int synth_users = 200;
  int synth_venues = 50;
  int synth_days = 120;
  int synth_branching = 2;
  int min_user_checkins = 10;
  int min_venue_visits = 10;
  int max_window_days = 120;
  std::string split_mode = "by_user";  // by_user | by_event
  bool collapse_jitter = false;

  // client model and federation
  std::size_t d = 128;
  std::size_t hidden = 256;
  std::size_t heads = 4;
  std::size_t layers = 6;
  std::size_t ffn = 1024;
  double lr = 1e-4;
  std::size_t batch = 64;
  std::size_t window = 32;
  std::size_t stride = 32;
  int local_epochs = 1;
  double sigma = 0.1;
  double clip = 1.0;
  std::uint32_t rounds = 3;
  std::size_t clients_per_round = 20;
  bool weighted_mean = false;

  // frozen LM
  std::size_t d_llm = 256;
  std::size_t lm_layers = 4;
  std::size_t lm_heads = 4;
  std::size_t lm_ffn = 1024;
  std::size_t lm_window = 32;
  std::size_t lm_stride = 32;
  int lm_epochs = 3;
  double lm_lr = 1e-3;
  std::size_t lm_batch = 16;

  // adapters
  std::size_t d1 = 512;
  std::size_t lk = 2;
  double inject_scale = 1.0;
  int adapter_epochs = 6;
  double adapter_lr = 1e-4;
  std::size_t adapter_batch = 64;
  std::size_t adapter_stride = 32;
  // lm: W_out starts as a copy of the pretraining head; xavier: fresh.
  std::string head_init = "lm";
  bool psi_zero_out = true;

  // evaluation
  std::size_t k_max = eval::kMaxRank;
  std::string eval_split = "test";  // test | valid

  std::uint64_t seed = 0;
  Ablation ablation;

  // Flat `key = value` text; '#' starts a comment. Unknown keys and bad
  // values throw ConfigError.
  static ExperimentConfig Parse(std::string_view text);
  static ExperimentConfig Load(const std::filesystem::path& path);
  void Set(const std::string& key, const std::string& value);
  std::string Get(const std::string& key) const;
  // Every key in canonical order, one `key = value` per line.
  std::string Serialize() const;
  // Hex FNV-1a of Serialize() without the seed line.
  std::string Hash() const;
  void Validate() const;
};

// Cache keys of each stage: the serialized settings the stage reads plus the
// keys of the stages it consumes.
struct StageKeys {
  std::string data, federation, lm, adapters;
};
StageKeys ComputeStageKeys(const ExperimentConfig& cfg);

struct DataBundle {
  encoding::Vocab vocab;
  std::vector<encoding::TokenizedSequence> train, valid, test;
  nlohmann::json split_manifest;
  nlohmann::json synth_manifest;  // null for file sources
  std::size_t raw_records = 0;
  std::size_t skipped_records = 0;
};

struct FederationResult {
  std::vector<server::AggregatedSignal> signals;  // one per round
  std::string round_log;  // newline-delimited JSON
  std::vector<std::string> traffic;  // raw bytes the server received
};

struct ModelBundle {
  std::shared_ptr<llm::FrozenLM> lm;
  std::unique_ptr<llm::Projection> psi;
  std::unique_ptr<llm::OutputHead> head;
  llm::InjectionConfig inj;
  // Signal conditioning evaluation; empty when injection is disabled.
  std::vector<double> signal;

  // Ψ(signal), or empty without injection.
  Tensor HTilde();
};

struct Footprint {
  std::size_t param_count = 0;
  std::size_t trainable_count = 0;
  double ratio = 0.0;
  std::size_t peak_mem_bytes = 0;
  double wall_time_s = 0.0;

  // The deterministic part: counts and ratio.
  nlohmann::json ToJson() const;
};

Footprint CountFootprint(ModelBundle& bundle);

// One query per predictable position of every non-overlapping window of
// `window` tokens; teacher-forced. Throws ConfigError on an empty split.
std::vector<eval::RankedPrediction> Predict(ModelBundle& bundle, const std::vector<encoding::TokenizedSequence>& split,
                                            std::size_t window, std::size_t k_max);
eval::MetricsReport Evaluate(ModelBundle& bundle, const std::vector<encoding::TokenizedSequence>& split,
                             std::size_t window, std::size_t k_max = eval::kMaxRank);

struct RunResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  eval::MetricsReport metrics;
  Footprint footprint;
  std::size_t vocab_size = 0;
  std::vector<double> lm_losses;
  std::vector<double> adapter_losses;
  double lm_valid_perplexity = 0.0;
  std::map<std::string, double> stage_seconds;

  // {config_hash, seed, acc1, acc5, acc20, mrr, m, footprint}; byte-stable.
  nlohmann::json Report() const;
};

// One CSV header plus a row per report, metrics rendered ×100.
std::string ReportCsv(const std::vector<nlohmann::json>& reports, const std::vector<std::string>& labels);
// Whitespace-separated table with a '#' header, for plotting tools.
std::string ReportTable(const std::vector<nlohmann::json>& reports, const std::vector<std::string>& labels);

// Rounds values to f32 in place, so in-memory weights equal what a checkpoint
// reload yields.
void RoundToCheckpointPrecision(const ParamList& params);

class Pipeline {
 public:
  explicit Pipeline(bool use_cache = true) : use_cache_(use_cache) {}

  // Runs every stage. With `out_dir`, writes the config, split, vocab, round
  // log, checkpoints, report and runtime files there.
  RunResult Run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});

  std::shared_ptr<const DataBundle> Data(const ExperimentConfig& cfg);
  std::shared_ptr<const FederationResult> Federation(const ExperimentConfig& cfg);
  std::shared_ptr<llm::FrozenLM> LanguageModel(const ExperimentConfig& cfg, std::vector<double>* losses = nullptr);
  // Fresh adapters trained on the cached upstream stages.
  ModelBundle Adapters(const ExperimentConfig& cfg, std::vector<double>* losses = nullptr);

 private:
  bool use_cache_;
  std::map<std::string, std::shared_ptr<const DataBundle>> data_;
  std::map<std::string, std::shared_ptr<const FederationResult>> fed_;
  std::map<std::string, std::shared_ptr<llm::FrozenLM>> lm_;
  std::map<std::string, std::vector<double>> lm_losses_;
};

// Rebuilds a bundle from a run directory written by Pipeline::Run.
ModelBundle LoadBundle(const std::filesystem::path& run_dir, const ExperimentConfig& cfg, std::size_t vocab_size);

}  // namespace mobfed::experiment

#endif  // MOBFED_EXPERIMENT_H_
