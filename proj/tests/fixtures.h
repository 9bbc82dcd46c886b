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

// Hand-built 30-user check-in fixture with known filter survivors.

#ifndef MOBFED_TESTS_FIXTURES_H_
#define MOBFED_TESTS_FIXTURES_H_

#include <cstdio>
#include <ctime>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mobfed/checkin.h"
#include "mobfed/experiment.h"

namespace mobfed::testfix {

inline constexpr std::int64_t kBase = 1333324800;  // Monday 2012-04-02 UTC
inline constexpr std::int64_t kDay = 86400;

struct FilterFixture {
  std::vector<std::string> tsv_lines;  // brightkite/gowalla layout
  // Survivor user id -> expected event count.
  std::map<std::string, std::size_t> survivors;
};

inline std::string Iso(std::int64_t t) {
  std::time_t tt = static_cast<std::time_t>(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline FilterFixture MakeFilterFixture() {
  FilterFixture fx;
  std::map<std::string, std::int64_t> last_offset;
  auto add = [&](const std::string& user, double day, const std::string& venue) {
    // Distinct minute offsets keep per-user order unambiguous.
    std::int64_t t = kBase + static_cast<std::int64_t>(day * kDay) + 60 * (last_offset[user]++ % 600);
    fx.tsv_lines.push_back(user + "\t" + Iso(t) + "\t40.0\t-74.0\t" + venue);
  };
  auto user_name = [](int i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "u%02d", i);
    return std::string(buf);
  };
  auto repeat = [&](const std::string& u, int n, const std::string& v, double day0 = 0.0) {
    for (int i = 0; i < n; ++i) add(u, day0 + i, v);
  };

  // u00..u19: ordinary users.
  for (int i = 0; i < 20; ++i) {
    repeat(user_name(i), 12, "hub");
    fx.survivors[user_name(i)] = 12;
  }
  // Boundary check-in counts.
  repeat("u20", 9, "hub");
  repeat("u21", 10, "hub");
  fx.survivors["u21"] = 10;
  // 400-day span: only the trailing 120 days survive.
  repeat("u22", 10, "hub", 0.0);
  repeat("u22", 12, "hub", 388.0);
  fx.survivors["u22"] = 12;
  // v9 has 9 visits and is dropped; u24 then falls below 10.
  repeat("u23", 10, "hub");
  repeat("u23", 5, "v9", 20.0);
  fx.survivors["u23"] = 10;
  repeat("u24", 6, "hub");
  repeat("u24", 4, "v9", 20.0);
  // v10 has exactly 10 visits and stays.
  repeat("u25", 10, "hub");
  repeat("u25", 5, "v10", 20.0);
  fx.survivors["u25"] = 15;
  repeat("u26", 5, "hub");
  repeat("u26", 5, "v10", 20.0);
  fx.survivors["u26"] = 10;
  // Cascade: u28 has 9 and leaves, taking vc from 10 visits to 6.
  repeat("u27", 10, "hub");
  repeat("u27", 6, "vc", 20.0);
  fx.survivors["u27"] = 10;
  repeat("u28", 5, "hub");
  repeat("u28", 4, "vc", 20.0);
  // 121-day span: the first event falls one day outside the window, the
  // second sits exactly on its edge.
  auto add_at = [&](const std::string& user, std::int64_t t, const std::string& venue) {
    fx.tsv_lines.push_back(user + "\t" + Iso(t) + "\t40.0\t-74.0\t" + venue);
  };
  add_at("u29", kBase, "hub");
  add_at("u29", kBase + kDay, "hub");
  for (int i = 0; i < 10; ++i) add_at("u29", kBase + (2 + 10 * i) * kDay, "hub");
  add_at("u29", kBase + 121 * kDay, "hub");
  fx.survivors["u29"] = 12;
  return fx;
}

inline std::vector<data::UserTrajectory> ParseFixture(const FilterFixture& fx) {
  std::ostringstream text;
  for (const auto& l : fx.tsv_lines) text << l << "\n";
  std::istringstream in(text.str());
  auto parsed = data::ParseCheckins(in, data::Format::kBrightkiteGowallaTsv, data::ParseMode::kStrict);
  return data::GroupByUser(std::move(parsed.records));
}

// Seconds-scale end-to-end configuration on a small synthetic corpus.
inline experiment::ExperimentConfig TinyExperiment(std::uint64_t seed = 1) {
  experiment::ExperimentConfig c;
  c.synth_users = 24;
  c.synth_venues = 12;
  c.synth_days = 60;
  c.d = 4;
  c.hidden = 8;
  c.heads = 2;
  c.layers = 1;
  c.ffn = 16;
  c.batch = 8;
  c.window = 8;
  c.stride = 8;
  c.rounds = 2;
  c.clients_per_round = 5;
  c.d_llm = 8;
  c.lm_layers = 2;
  c.lm_heads = 2;
  c.lm_ffn = 16;
  c.lm_window = 8;
  c.lm_stride = 8;
  c.lm_epochs = 2;
  c.d1 = 8;
  c.lk = 1;
  c.adapter_epochs = 2;
  c.adapter_lr = 1e-3;
  c.adapter_batch = 16;
  c.adapter_stride = 8;
  c.seed = seed;
  return c;
}

}  // namespace mobfed::testfix

#endif  // MOBFED_TESTS_FIXTURES_H_
