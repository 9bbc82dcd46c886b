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

#include "mobfed/experiment.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "mobfed/checkin.h"
#include "mobfed/checkpoint.h"
#include "mobfed/client.h"
#include "mobfed/errors.h"
#include "mobfed/synth.h"

namespace mobfed::experiment {
namespace {

enum class Stage { kData, kFederation, kLm, kAdapters, kEval };

std::string Trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string FormatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& value) {
  T out{};
  auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
  return out;
}

struct Field {
  const char* key;
  Stage stage;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T>
Field Bind(const char* key, Stage stage, T ExperimentConfig::*member) {
  Field f{key, stage, {}, {}};
  f.get = [member](const ExperimentConfig& c) -> std::string {
    if constexpr (std::is_same_v<T, std::string>) {
      return c.*member;
    } else if constexpr (std::is_same_v<T, bool>) {
      return c.*member ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
      return FormatDouble(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  f.set = [member, key](ExperimentConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.*member = v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1") {
        c.*member = true;
      } else if (v == "false" || v == "0") {
        c.*member = false;
      } else {
        throw ConfigError(std::string("bad boolean for ") + key + ": '" + v + "'");
      }
    } else {
      c.*member = ParseNumber<T>(key, v);
    }
  };
  return f;
}

Field AblationField(const char* key, bool Ablation::*flag, Stage stage) {
  Field f{key, stage, {}, {}};
  f.get = [flag](const ExperimentConfig& c) -> std::string { return c.ablation.*flag ? "true" : "false"; };
  f.set = [flag, key](ExperimentConfig& c, const std::string& v) {
    if (v == "true" || v == "1") {
      c.ablation.*flag = true;
    } else if (v == "false" || v == "0") {
      c.ablation.*flag = false;
    } else {
      throw ConfigError(std::string("bad boolean for ") + key + ": '" + v + "'");
    }
  };
  return f;
}

const std::vector<Field>& Fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> fields = {
      Bind("source", Stage::kData, &C::source),
      Bind("data_path", Stage::kData, &C::data_path),
      Bind("data_format", Stage::kData, &C::data_format),
      Bind("synth_users", Stage::kData, &C::synth_users),
      Bind("synth_venues", Stage::kData, &C::synth_venues),
      Bind("synth_days", Stage::kData, &C::synth_days),
      Bind("synth_branching", Stage::kData, &C::synth_branching),
      Bind("min_user_checkins", Stage::kData, &C::min_user_checkins),
      Bind("min_venue_visits", Stage::kData, &C::min_venue_visits),
      Bind("max_window_days", Stage::kData, &C::max_window_days),
      Bind("split_mode", Stage::kData, &C::split_mode),
      Bind("collapse_jitter", Stage::kData, &C::collapse_jitter),
      Bind("seed", Stage::kData, &C::seed),
      Bind("d", Stage::kFederation, &C::d),
      Bind("hidden", Stage::kFederation, &C::hidden),
      Bind("heads", Stage::kFederation, &C::heads),
      Bind("layers", Stage::kFederation, &C::layers),
      Bind("ffn", Stage::kFederation, &C::ffn),
      Bind("lr", Stage::kFederation, &C::lr),
      Bind("batch", Stage::kFederation, &C::batch),
      Bind("window", Stage::kFederation, &C::window),
      Bind("stride", Stage::kFederation, &C::stride),
      Bind("local_epochs", Stage::kFederation, &C::local_epochs),
      Bind("sigma", Stage::kFederation, &C::sigma),
      Bind("clip", Stage::kFederation, &C::clip),
      Bind("rounds", Stage::kFederation, &C::rounds),
      Bind("clients_per_round", Stage::kFederation, &C::clients_per_round),
      Bind("weighted_mean", Stage::kFederation, &C::weighted_mean),
      AblationField("no_semantic_encoding", &Ablation::no_semantic_encoding, Stage::kFederation),
      AblationField("no_dp_noise", &Ablation::no_dp_noise, Stage::kFederation),
      Bind("d_llm", Stage::kLm, &C::d_llm),
      Bind("lm_layers", Stage::kLm, &C::lm_layers),
      Bind("lm_heads", Stage::kLm, &C::lm_heads),
      Bind("lm_ffn", Stage::kLm, &C::lm_ffn),
      Bind("lm_window", Stage::kLm, &C::lm_window),
      Bind("lm_stride", Stage::kLm, &C::lm_stride),
      Bind("lm_epochs", Stage::kLm, &C::lm_epochs),
      Bind("lm_lr", Stage::kLm, &C::lm_lr),
      Bind("lm_batch", Stage::kLm, &C::lm_batch),
      Bind("d1", Stage::kAdapters, &C::d1),
      Bind("lk", Stage::kAdapters, &C::lk),
      Bind("inject_scale", Stage::kAdapters, &C::inject_scale),
      Bind("adapter_epochs", Stage::kAdapters, &C::adapter_epochs),
      Bind("adapter_lr", Stage::kAdapters, &C::adapter_lr),
      Bind("adapter_batch", Stage::kAdapters, &C::adapter_batch),
      Bind("adapter_stride", Stage::kAdapters, &C::adapter_stride),
      Bind("head_init", Stage::kAdapters, &C::head_init),
      Bind("psi_zero_out", Stage::kAdapters, &C::psi_zero_out),
      AblationField("no_outer_product", &Ablation::no_outer_product, Stage::kAdapters),
      AblationField("no_projection_mlp", &Ablation::no_projection_mlp, Stage::kAdapters),
      AblationField("no_llm_injection", &Ablation::no_llm_injection, Stage::kAdapters),
      Bind("k_max", Stage::kEval, &C::k_max),
      Bind("eval_split", Stage::kEval, &C::eval_split),
  };
  return fields;
}

const Field& FindField(const std::string& key) {
  for (const auto& f : Fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string StageText(const ExperimentConfig& cfg, Stage stage) {
  std::string out;
  for (const auto& f : Fields()) {
    if (f.stage == stage) out += std::string(f.key) + "=" + f.get(cfg) + "\n";
  }
  return out;
}

std::uint64_t Tag(std::string_view name) { return Fnv1a64(name); }

std::vector<llm::TokenSeq> Tokens(const std::vector<encoding::TokenizedSequence>& seqs) {
  std::vector<llm::TokenSeq> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(s.tokens);
  return out;
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

template <typename F>
auto InStage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

llm::LMConfig LmConfigOf(const ExperimentConfig& cfg, std::size_t vocab_size) {
  return {vocab_size, cfg.d_llm, cfg.lm_layers, cfg.lm_heads, cfg.lm_ffn, cfg.lm_window};
}

llm::ProjectionConfig ProjectionConfigOf(const ExperimentConfig& cfg) {
  return {cfg.d * cfg.d, cfg.d1, cfg.d_llm, cfg.ablation.no_projection_mlp, cfg.psi_zero_out};
}

llm::InjectionConfig InjectionOf(const ExperimentConfig& cfg) {
  return {cfg.lk, cfg.inject_scale, !cfg.ablation.no_llm_injection};
}

}  // namespace

Ablation Ablation::Parse(std::string_view csv) {
  Ablation a;
  std::string text(csv);
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (item.empty() || item == "none") continue;
    if (item == "no_semantic_encoding") {
      a.no_semantic_encoding = true;
    } else if (item == "no_outer_product") {
      a.no_outer_product = true;
    } else if (item == "no_dp_noise") {
      a.no_dp_noise = true;
    } else if (item == "no_projection_mlp") {
      a.no_projection_mlp = true;
    } else if (item == "no_llm_injection") {
      a.no_llm_injection = true;
    } else {
      throw ConfigError("unknown ablation flag '" + item + "'");
    }
  }
  return a;
}

std::string Ablation::ToString() const {
  std::vector<std::string> on;
  if (no_semantic_encoding) on.push_back("no_semantic_encoding");
  if (no_outer_product) on.push_back("no_outer_product");
  if (no_dp_noise) on.push_back("no_dp_noise");
  if (no_projection_mlp) on.push_back("no_projection_mlp");
  if (no_llm_injection) on.push_back("no_llm_injection");
  if (on.empty()) return "none";
  std::string out = on[0];
  for (std::size_t i = 1; i < on.size(); ++i) out += "," + on[i];
  return out;
}

bool Ablation::any() const {
  return no_semantic_encoding || no_outer_product || no_dp_noise || no_projection_mlp || no_llm_injection;
}

ExperimentConfig ExperimentConfig::Parse(std::string_view text) {
  ExperimentConfig cfg;
  std::string s(text);
  std::stringstream in(s);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = Trim(std::string_view(line).substr(0, eq));
    std::string value = Trim(std::string_view(line).substr(eq + 1));
    if (key == "ablation") {
      Ablation extra = Ablation::Parse(value);
      cfg.ablation.no_semantic_encoding |= extra.no_semantic_encoding;
      cfg.ablation.no_outer_product |= extra.no_outer_product;
      cfg.ablation.no_dp_noise |= extra.no_dp_noise;
      cfg.ablation.no_projection_mlp |= extra.no_projection_mlp;
      cfg.ablation.no_llm_injection |= extra.no_llm_injection;
      continue;
    }
    cfg.Set(key, value);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str());
}

void ExperimentConfig::Set(const std::string& key, const std::string& value) { FindField(key).set(*this, value); }

std::string ExperimentConfig::Get(const std::string& key) const { return FindField(key).get(*this); }

std::string ExperimentConfig::Serialize() const {
  std::string out;
  for (const auto& f : Fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::string ExperimentConfig::Hash() const {
  std::string text;
  for (const auto& f : Fields()) {
    if (std::string_view(f.key) == "seed") continue;
    text += std::string(f.key) + "=" + f.get(*this) + "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(Fnv1a64(text)));
  return buf;
}

void ExperimentConfig::Validate() const {
  if (source != "synth" && source != "file") throw ConfigError("source must be synth or file");
  if (head_init != "lm" && head_init != "xavier") throw ConfigError("head_init must be lm or xavier");
  if (synth_branching < 0) throw ConfigError("synth_branching must be >= 0");
  if (source == "file" && data_path.empty()) throw ConfigError("source=file needs data_path");
  if (split_mode != "by_user" && split_mode != "by_event") throw ConfigError("split_mode must be by_user or by_event");
  if (eval_split != "test" && eval_split != "valid") throw ConfigError("eval_split must be test or valid");
  if (d == 0 || d > 0xffff) throw ConfigError("d must be in [1, 65535]");
  if (heads == 0 || hidden % heads != 0) throw ConfigError("hidden must be divisible by heads");
  if (lm_heads == 0 || d_llm % lm_heads != 0) throw ConfigError("d_llm must be divisible by lm_heads");
  if (lk < 1 || lk > lm_layers) throw ConfigError("lk must be in [1, lm_layers]");
  if (window < 2 || lm_window < 2) throw ConfigError("window lengths must be >= 2");
  if (stride < 1 || lm_stride < 1 || adapter_stride < 1) throw ConfigError("strides must be >= 1");
  if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
  if (clip < 0.0) throw ConfigError("clip must be >= 0");
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (clients_per_round < 1) throw ConfigError("clients_per_round must be >= 1");
  if (local_epochs < 0 || lm_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (adapter_epochs < 1) throw ConfigError("adapter_epochs must be >= 1");
  if (batch < 1 || lm_batch < 1 || adapter_batch < 1) throw ConfigError("batch sizes must be >= 1");
  if (k_max < 20) throw ConfigError("k_max must be >= 20");
  data::FilterConfig{min_user_checkins, min_venue_visits, max_window_days}.Validate();
}

StageKeys ComputeStageKeys(const ExperimentConfig& cfg) {
  StageKeys k;
  k.data = StageText(cfg, Stage::kData);
  k.federation = k.data + StageText(cfg, Stage::kFederation);
  k.lm = k.data + StageText(cfg, Stage::kLm);
  k.adapters = k.federation + StageText(cfg, Stage::kLm) + StageText(cfg, Stage::kAdapters);
  return k;
}

Tensor ModelBundle::HTilde() {
  if (!inj.enabled || signal.empty()) return {};
  return psi->Apply(signal);
}

nlohmann::json Footprint::ToJson() const {
  return {{"param_count", param_count}, {"trainable_count", trainable_count}, {"ratio", ratio}};
}

Footprint CountFootprint(ModelBundle& bundle) {
  ParamList all = bundle.lm->Params();
  for (Parameter* p : bundle.psi->Params()) all.push_back(p);
  for (Parameter* p : bundle.head->Params()) all.push_back(p);
  Footprint f;
  f.param_count = CountParameters(all);
  f.trainable_count = CountTrainable(all);
  f.ratio = static_cast<double>(f.trainable_count) / static_cast<double>(f.param_count);
  return f;
}

std::vector<eval::RankedPrediction> Predict(ModelBundle& bundle, const std::vector<encoding::TokenizedSequence>& split,
                                            std::size_t window, std::size_t k_max) {
  struct Ref {
    const encoding::TokenizedSequence* seq;
    encoding::WindowRange range;
  };
  std::vector<Ref> refs;
  for (const auto& s : split) {
    for (const auto& r : encoding::MakeWindows(s.size(), window, window)) refs.push_back({&s, r});
  }
  if (refs.empty()) throw ConfigError("evaluate: split has no predictable positions");
  Tensor h_tilde = bundle.HTilde();
  const std::size_t v = bundle.head->w_out.value.shape()[0];
  const std::size_t k = std::min(k_max, v);
  std::vector<eval::RankedPrediction> out;
  for (std::size_t s = 0; s < refs.size(); s += 64) {
    std::size_t e = std::min(refs.size(), s + 64);
    std::vector<std::size_t> tokens, segments;
    for (std::size_t i = s; i < e; ++i) {
      const auto& r = refs[i];
      tokens.insert(tokens.end(), r.seq->tokens.begin() + static_cast<std::ptrdiff_t>(r.range.start),
                    r.seq->tokens.begin() + static_cast<std::ptrdiff_t>(r.range.start + r.range.length));
      segments.push_back(r.range.length);
    }
    Graph g;
    Var h = h_tilde.empty() ? Var{} : g.ConstantRef(h_tilde);
    const Tensor& logits = g.value(llm::InjectForward(g, tokens, segments, h, *bundle.lm, *bundle.head, bundle.inj));
    std::size_t row = 0;
    for (std::size_t i = s; i < e; ++i) {
      const auto& r = refs[i];
      for (std::size_t t = 0; t + 1 < r.range.length; ++t) {
        eval::RankedPrediction p;
        p.ranked = llm::RankLogits(std::span<const double>(logits.data() + (row + t) * v, v), k);
        p.truth = r.seq->tokens[r.range.start + t + 1];
        out.push_back(std::move(p));
      }
      row += r.range.length;
    }
  }
  return out;
}

eval::MetricsReport Evaluate(ModelBundle& bundle, const std::vector<encoding::TokenizedSequence>& split,
                             std::size_t window, std::size_t k_max) {
  auto preds = Predict(bundle, split, window, k_max);
  return eval::Summarize(preds);
}

nlohmann::json RunResult::Report() const {
  nlohmann::json j = metrics.ToJson();
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["footprint"] = footprint.ToJson();
  j["units"] = "fractions in [0,1]";
  return j;
}

namespace {

std::string Percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::vector<std::vector<std::string>> ReportRows(const std::vector<nlohmann::json>& reports,
                                                 const std::vector<std::string>& labels) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const auto& fp = r.at("footprint");
    rows.push_back({i < labels.size() ? labels[i] : std::to_string(i), r.at("config_hash").get<std::string>(),
                    std::to_string(r.at("seed").get<std::uint64_t>()), Percent(r.at("acc1").get<double>()),
                    Percent(r.at("acc5").get<double>()), Percent(r.at("acc20").get<double>()),
                    Percent(r.at("mrr").get<double>()), std::to_string(r.at("m").get<std::size_t>()),
                    std::to_string(fp.at("param_count").get<std::size_t>()),
                    std::to_string(fp.at("trainable_count").get<std::size_t>()),
                    FormatDouble(fp.at("ratio").get<double>())});
  }
  return rows;
}

const char* kColumns[] = {"label", "config_hash", "seed", "acc1", "acc5", "acc20", "mrr", "m", "params", "trainable",
                          "ratio"};

}  // namespace

std::string ReportCsv(const std::vector<nlohmann::json>& reports, const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t c = 0; c < std::size(kColumns); ++c) out += (c ? "," : "") + std::string(kColumns[c]);
  out += "\n";
  for (const auto& row : ReportRows(reports, labels)) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + row[c];
    out += "\n";
  }
  return out;
}

std::string ReportTable(const std::vector<nlohmann::json>& reports, const std::vector<std::string>& labels) {
  std::string out = "#";
  for (const char* c : kColumns) out += std::string(" ") + c;
  out += "\n";
  for (const auto& row : ReportRows(reports, labels)) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? " " : "") + row[c];
    out += "\n";
  }
  return out;
}

void RoundToCheckpointPrecision(const ParamList& params) {
  for (Parameter* p : params) {
    for (double& v : p->value.span()) v = static_cast<double>(static_cast<float>(v));
  }
}

std::shared_ptr<const DataBundle> Pipeline::Data(const ExperimentConfig& cfg) {
  std::string key = ComputeStageKeys(cfg).data;
  if (use_cache_) {
    if (auto it = data_.find(key); it != data_.end()) return it->second;
  }
  auto out = std::make_shared<DataBundle>();
  std::vector<data::UserTrajectory> users;
  if (cfg.source == "synth") {
    data::SynthParams p;
    p.n_users = cfg.synth_users;
    p.n_venues = cfg.synth_venues;
    p.days = cfg.synth_days;
    p.branching = cfg.synth_branching;
    p.seed = DeriveSeed(cfg.seed, Tag("synth"));
    auto corpus = data::SynthGenerate(p);
    users = std::move(corpus.users);
    out->synth_manifest = std::move(corpus.manifest);
  } else if (cfg.data_format == "canonical") {
    users = data::ReadRecordFile(cfg.data_path);
  } else {
    auto parsed = data::ParseCheckinFile(cfg.data_path, data::ParseFormatTag(cfg.data_format));
    out->skipped_records = parsed.skipped;
    users = data::GroupByUser(std::move(parsed.records));
  }
  for (const auto& u : users) out->raw_records += u.events.size();
  if (cfg.collapse_jitter) {
    for (auto& u : users) u = encoding::CollapseJitter(u);
  }
  data::FilterConfig fc{cfg.min_user_checkins, cfg.min_venue_visits, cfg.max_window_days};
  users = data::ApplyFilters(std::move(users), fc);
  auto mode = cfg.split_mode == "by_event" ? data::SplitMode::kByEvent : data::SplitMode::kByUser;
  data::DatasetSplit split = data::SplitDataset(users, DeriveSeed(cfg.seed, Tag("split")), mode);
  out->split_manifest = data::SplitManifest(split, fc);
  out->vocab = encoding::BuildVocab(split.train);
  for (const auto& u : split.train) out->train.push_back(encoding::Tokenize(u, out->vocab));
  for (const auto& u : split.valid) out->valid.push_back(encoding::Tokenize(u, out->vocab));
  for (const auto& u : split.test) out->test.push_back(encoding::Tokenize(u, out->vocab));
  if (use_cache_) data_[key] = out;
  return out;
}

std::shared_ptr<const FederationResult> Pipeline::Federation(const ExperimentConfig& cfg) {
  std::string key = ComputeStageKeys(cfg).federation;
  if (use_cache_) {
    if (auto it = fed_.find(key); it != fed_.end()) return it->second;
  }
  auto data = Data(cfg);
  client::ClientModelConfig cc;
  cc.d = cfg.d;
  cc.hidden = cfg.hidden;
  cc.heads = cfg.heads;
  cc.layers = cfg.layers;
  cc.ffn = cfg.ffn;
  cc.vocab_size = data->vocab.size();
  cc.time_buckets = data->vocab.time_bucket_count;
  cc.lr = cfg.lr;
  cc.batch = cfg.batch;
  cc.window = cfg.window;
  cc.stride = cfg.stride;
  cc.use_time = !cfg.ablation.no_semantic_encoding;

  const std::uint64_t init_seed = DeriveSeed(cfg.seed, Tag("client-init"));
  std::vector<client::Client> clients;
  clients.reserve(data->train.size());
  std::size_t with_windows = 0;
  for (const auto& seq : data->train) {
    clients.emplace_back(seq.user_id, seq, cc, init_seed);
    if (clients.back().window_count() > 0) ++with_windows;
  }
  if (with_windows == 0) throw ConfigError("no client has a training window");

  server::RoundConfig rc;
  rc.total_rounds = cfg.rounds;
  rc.clients_per_round = std::min(cfg.clients_per_round, with_windows);
  rc.global_seed = DeriveSeed(cfg.seed, Tag("federation"));
  rc.local_epochs = cfg.local_epochs;
  rc.privacy.sigma = cfg.ablation.no_dp_noise ? 0.0 : cfg.sigma;
  rc.privacy.clip_norm = cfg.clip;
  rc.weighted = cfg.weighted_mean;

  auto out = std::make_shared<FederationResult>();
  server::FedServer srv;
  std::ostringstream log;
  out->signals = server::RunFederation(clients, rc, srv, &log);
  out->round_log = log.str();
  out->traffic = srv.traffic();
  if (use_cache_) fed_[key] = out;
  return out;
}

std::shared_ptr<llm::FrozenLM> Pipeline::LanguageModel(const ExperimentConfig& cfg, std::vector<double>* losses) {
  std::string key = ComputeStageKeys(cfg).lm;
  if (use_cache_) {
    if (auto it = lm_.find(key); it != lm_.end()) {
      if (losses) *losses = lm_losses_[key];
      return it->second;
    }
  }
  auto data = Data(cfg);
  Rng rng(DeriveSeed(cfg.seed, Tag("lm-init")));
  auto lm = std::make_shared<llm::FrozenLM>(LmConfigOf(cfg, data->vocab.size()), rng);
  llm::PretrainConfig pc;
  pc.epochs = cfg.lm_epochs;
  pc.batch = cfg.lm_batch;
  pc.lr = cfg.lm_lr;
  pc.window = cfg.lm_window;
  pc.stride = cfg.lm_stride;
  pc.seed = DeriveSeed(cfg.seed, Tag("lm-train"));
  auto l = llm::PretrainToyLM(*lm, Tokens(data->train), pc);
  RoundToCheckpointPrecision(lm->Params());
  if (losses) *losses = l;
  if (use_cache_) {
    lm_[key] = lm;
    lm_losses_[key] = l;
  }
  return lm;
}

ModelBundle Pipeline::Adapters(const ExperimentConfig& cfg, std::vector<double>* losses) {
  auto data = Data(cfg);
  auto fed = Federation(cfg);
  ModelBundle b;
  b.lm = LanguageModel(cfg);
  Rng psi_rng(DeriveSeed(cfg.seed, Tag("psi-init")));
  b.psi = std::make_unique<llm::Projection>(ProjectionConfigOf(cfg), psi_rng);
  Rng head_rng(DeriveSeed(cfg.seed, Tag("head-init")));
  b.head = std::make_unique<llm::OutputHead>(data->vocab.size(), cfg.d_llm, head_rng);
  if (cfg.head_init == "lm") b.head->w_out.value = b.lm->lm_head.value;
  b.inj = InjectionOf(cfg);

  std::vector<std::vector<double>> signals;
  for (const auto& s : fed->signals) {
    signals.push_back(cfg.ablation.no_outer_product ? std::vector<double>(s.mean.size(), 0.0) : s.mean);
  }
  llm::AdapterTrainConfig ac;
  ac.epochs = cfg.adapter_epochs;
  ac.batch = cfg.adapter_batch;
  ac.lr = cfg.adapter_lr;
  ac.window = cfg.lm_window;
  ac.stride = cfg.adapter_stride;
  ac.seed = DeriveSeed(cfg.seed, Tag("adapter-train"));
  auto l = llm::TrainAdapters(*b.lm, *b.psi, *b.head, b.inj, signals, Tokens(data->train), ac);
  if (losses) *losses = l;
  ParamList trained = b.psi->Params();
  trained.push_back(&b.head->w_out);
  RoundToCheckpointPrecision(trained);
  if (b.inj.enabled) b.signal = signals.back();
  return b;
}

RunResult Pipeline::Run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.Validate();
  const auto start = std::chrono::steady_clock::now();
  memstats::ResetPeak();
  RunResult res;
  res.config_hash = cfg.Hash();
  res.seed = cfg.seed;

  auto t = std::chrono::steady_clock::now();
  auto data = InStage("data", [&] { return Data(cfg); });
  res.stage_seconds["data"] = Seconds(t);
  res.vocab_size = data->vocab.size();

  t = std::chrono::steady_clock::now();
  auto fed = InStage("federation", [&] { return Federation(cfg); });
  res.stage_seconds["federation"] = Seconds(t);

  t = std::chrono::steady_clock::now();
  auto lm = InStage("lm", [&] { return LanguageModel(cfg, &res.lm_losses); });
  res.stage_seconds["lm"] = Seconds(t);

  t = std::chrono::steady_clock::now();
  ModelBundle bundle = InStage("adapters", [&] { return Adapters(cfg, &res.adapter_losses); });
  res.stage_seconds["adapters"] = Seconds(t);

  t = std::chrono::steady_clock::now();
  const auto& split = cfg.eval_split == "valid" ? data->valid : data->test;
  res.metrics = InStage("eval", [&] { return Evaluate(bundle, split, cfg.lm_window, cfg.k_max); });
  if (!data->valid.empty()) {
    res.lm_valid_perplexity = InStage("eval", [&] { return llm::Perplexity(*lm, Tokens(data->valid), cfg.lm_window); });
  }
  res.stage_seconds["eval"] = Seconds(t);

  res.footprint = CountFootprint(bundle);
  res.footprint.peak_mem_bytes = memstats::PeakBytes();
  res.footprint.wall_time_s = Seconds(start);

  if (!out_dir.empty()) {
    InStage("report", [&] {
      std::filesystem::create_directories(out_dir);
      WriteText(out_dir / "config.txt", cfg.Serialize());
      WriteText(out_dir / "split.json", data->split_manifest.dump(2) + "\n");
      data->vocab.Save(out_dir / "vocab.json");
      if (!data->synth_manifest.is_null()) WriteText(out_dir / "synth_manifest.json", data->synth_manifest.dump(2) + "\n");
      WriteText(out_dir / "rounds.jsonl", fed->round_log);
      nlohmann::json lm_meta = {{"vocab_size", res.vocab_size},     {"d_llm", cfg.d_llm},
                                {"layers", cfg.lm_layers},          {"heads", cfg.lm_heads},
                                {"ffn", cfg.lm_ffn},                {"max_len", cfg.lm_window},
                                {"frozen", bundle.lm->frozen()}};
      SaveCheckpoint(out_dir / "lm", bundle.lm->Params(), lm_meta);
      ParamList adapters = bundle.psi->Params();
      adapters.push_back(&bundle.head->w_out);
      nlohmann::json ad_meta = {{"lk", bundle.inj.lk},
                                {"scale", bundle.inj.scale},
                                {"injection", bundle.inj.enabled},
                                {"d", cfg.d},
                                {"d1", cfg.d1},
                                {"d_llm", cfg.d_llm},
                                {"vocab_size", res.vocab_size},
                                {"linear_projection", cfg.ablation.no_projection_mlp},
                                {"gaussian_sampler", std::string(kGaussianSampler)}};
      SaveCheckpoint(out_dir / "adapters", adapters, ad_meta);
      WriteText(out_dir / "signal.json", nlohmann::json(bundle.signal).dump() + "\n");
      nlohmann::json report = res.Report();
      WriteText(out_dir / "report.json", report.dump(2) + "\n");
      WriteText(out_dir / "report.csv", ReportCsv({report}, {cfg.ablation.ToString()}));
      nlohmann::json runtime = {{"peak_mem_bytes", res.footprint.peak_mem_bytes},
                                {"wall_time_s", res.footprint.wall_time_s},
                                {"stage_seconds", res.stage_seconds},
                                {"lm_losses", res.lm_losses},
                                {"adapter_losses", res.adapter_losses},
                                {"lm_valid_perplexity", res.lm_valid_perplexity},
                                {"gaussian_sampler", std::string(kGaussianSampler)}};
      WriteText(out_dir / "runtime.json", runtime.dump(2) + "\n");
      return 0;
    });
  }
  return res;
}

ModelBundle LoadBundle(const std::filesystem::path& run_dir, const ExperimentConfig& cfg, std::size_t vocab_size) {
  ModelBundle b;
  Rng rng(0);
  b.lm = std::make_shared<llm::FrozenLM>(LmConfigOf(cfg, vocab_size), rng);
  LoadCheckpoint(run_dir / "lm", b.lm->Params());
  b.psi = std::make_unique<llm::Projection>(ProjectionConfigOf(cfg), rng);
  b.head = std::make_unique<llm::OutputHead>(vocab_size, cfg.d_llm, rng);
  ParamList adapters = b.psi->Params();
  adapters.push_back(&b.head->w_out);
  LoadCheckpoint(run_dir / "adapters", adapters);
  b.inj = InjectionOf(cfg);
  std::ifstream in(run_dir / "signal.json");
  if (!in) throw std::runtime_error("cannot open " + (run_dir / "signal.json").string());
  b.signal = nlohmann::json::parse(in).get<std::vector<double>>();
  return b;
}

}  // namespace mobfed::experiment
