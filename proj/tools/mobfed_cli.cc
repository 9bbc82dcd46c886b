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

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mobfed/checkin.h"
#include "mobfed/errors.h"
#include "mobfed/experiment.h"
#include "mobfed/filters.h"
#include "mobfed/synth.h"

namespace fs = std::filesystem;
using namespace mobfed;

namespace {

void WriteFile(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

nlohmann::json ReadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mobfed: federated mobility encoding with a frozen language-model head"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse, filter and split a check-in file");
  std::string in_path, format = "brightkite_gowalla_tsv", records_out, split_out, split_mode = "by_user";
  bool strict = false;
  data::FilterConfig fc;
  std::uint64_t split_seed = 0;
  ingest->add_option("--input", in_path, "check-in file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", format, "brightkite_gowalla_tsv | weeplace_csv | foursquare_tsv");
  ingest->add_flag("--strict", strict, "fail on the first malformed line");
  ingest->add_option("--min-user", fc.min_user_checkins, "minimum check-ins per user");
  ingest->add_option("--min-venue", fc.min_venue_visits, "minimum visits per venue");
  ingest->add_option("--max-days", fc.max_window_days, "trailing window per user, days");
  ingest->add_option("--out", records_out, "canonical record file")->required();
  ingest->add_option("--split-out", split_out, "split manifest JSON");
  ingest->add_option("--split-seed", split_seed, "split seed");
  ingest->add_option("--split-mode", split_mode, "by_user | by_event");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  data::SynthParams sp;
  std::string synth_out, synth_manifest;
  synth->add_option("--users", sp.n_users);
  synth->add_option("--venues", sp.n_venues);
  synth->add_option("--days", sp.days);
  synth->add_option("--seed", sp.seed);
  synth->add_option("--checkins-per-day", sp.checkins_per_day);
  synth->add_option("--branching", sp.branching, "exits per venue; 0 = unrestricted");
  synth->add_option("--out", synth_out, "canonical record file")->required();
  synth->add_option("--manifest", synth_manifest, "generator manifest JSON");

  // train
  auto* train = app.add_subcommand("train", "run the full pipeline and write a run directory");
  std::string config_path, out_dir, ablation;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> rounds;
  std::optional<double> sigma, clip;
  std::optional<std::size_t> lk;
  std::vector<std::string> overrides;
  train->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  train->add_option("--seed", seed);
  train->add_option("--rounds", rounds);
  train->add_option("--sigma", sigma);
  train->add_option("--clip", clip);
  train->add_option("--lk", lk);
  train->add_option("--ablation", ablation, "comma-separated ablation flags");
  train->add_option("--set", overrides, "extra key=value overrides");
  train->add_option("--out", out_dir, "run directory")->required();

  // eval
  auto* evalc = app.add_subcommand("eval", "evaluate the checkpoints of a run directory");
  std::string run_dir, split_name = "test";
  evalc->add_option("--run", run_dir, "run directory written by train")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("--split", split_name, "test | valid");

  // report
  auto* report = app.add_subcommand("report", "collect run reports into JSON, CSV and a plain table");
  std::vector<std::string> runs;
  std::string csv_out, table_out, json_out;
  report->add_option("--run", runs, "run directories")->required();
  report->add_option("--csv", csv_out);
  report->add_option("--table", table_out);
  report->add_option("--json", json_out);

  // config
  auto* config = app.add_subcommand("config", "print the default config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      auto mode = strict ? data::ParseMode::kStrict : data::ParseMode::kLenient;
      auto parsed = data::ParseCheckinFile(in_path, data::ParseFormatTag(format), mode);
      auto users = data::ApplyFilters(data::GroupByUser(std::move(parsed.records)), fc);
      data::WriteRecordFile(records_out, users);
      std::size_t events = 0;
      for (const auto& u : users) events += u.events.size();
      std::cerr << "parsed, skipped " << parsed.skipped << " lines; kept " << users.size() << " users, " << events
                << " check-ins\n";
      if (!split_out.empty()) {
        auto m = split_mode == "by_event" ? data::SplitMode::kByEvent : data::SplitMode::kByUser;
        auto split = data::SplitDataset(users, split_seed, m);
        WriteFile(split_out, data::SplitManifest(split, fc).dump(2) + "\n");
      }
    } else if (*synth) {
      auto corpus = data::SynthGenerate(sp);
      data::WriteRecordFile(synth_out, corpus.users);
      if (!synth_manifest.empty()) WriteFile(synth_manifest, corpus.manifest.dump(2) + "\n");
    } else if (*train) {
      experiment::ExperimentConfig cfg =
          config_path.empty() ? experiment::ExperimentConfig{} : experiment::ExperimentConfig::Load(config_path);
      if (seed) cfg.seed = *seed;
      if (rounds) cfg.rounds = *rounds;
      if (sigma) cfg.sigma = *sigma;
      if (clip) cfg.clip = *clip;
      if (lk) cfg.lk = *lk;
      for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.Set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (!ablation.empty()) cfg.ablation = experiment::Ablation::Parse(ablation);
      experiment::Pipeline pipeline;
      auto res = pipeline.Run(cfg, out_dir);
      std::cout << res.Report().dump(2) << "\n";
    } else if (*evalc) {
      fs::path dir(run_dir);
      auto cfg = experiment::ExperimentConfig::Load(dir / "config.txt");
      experiment::Pipeline pipeline;
      auto data = pipeline.Data(cfg);
      auto bundle = experiment::LoadBundle(dir, cfg, data->vocab.size());
      const auto& split = split_name == "valid" ? data->valid : data->test;
      auto metrics = experiment::Evaluate(bundle, split, cfg.lm_window, cfg.k_max);
      std::cout << metrics.ToJson().dump(2) << "\n";
    } else if (*report) {
      std::vector<nlohmann::json> reports;
      std::vector<std::string> labels;
      for (const auto& r : runs) {
        reports.push_back(ReadJson(fs::path(r) / "report.json"));
        labels.push_back(fs::path(r).filename().string());
      }
      if (!csv_out.empty()) WriteFile(csv_out, experiment::ReportCsv(reports, labels));
      if (!table_out.empty()) WriteFile(table_out, experiment::ReportTable(reports, labels));
      if (!json_out.empty()) WriteFile(json_out, nlohmann::json(reports).dump(2) + "\n");
      std::cout << experiment::ReportCsv(reports, labels);
    } else if (*config) {
      std::cout << experiment::ExperimentConfig{}.Serialize();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
