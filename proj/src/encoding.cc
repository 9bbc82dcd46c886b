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

#include "mobfed/encoding.h"

#include <fstream>
#include <set>

#include "mobfed/errors.h"
#include "mobfed/nn.h"

namespace mobfed::encoding {

std::size_t Vocab::Tokenize(const std::string& venue_id) const {
  auto it = venue_to_token.find(venue_id);
  return it == venue_to_token.end() ? unk_id : it->second;
}

nlohmann::json Vocab::ToJson() const {
  nlohmann::json venues = nlohmann::json::object();
  for (const auto& [v, t] : venue_to_token) venues[v] = t;
  return {{"venue_to_token", venues},
          {"time_bucket_count", time_bucket_count},
          {"specials", {{"PAD", pad_id}, {"UNK", unk_id}}},
          {"size", size()}};
}

Vocab Vocab::FromJson(const nlohmann::json& j) {
  Vocab v;
  for (const auto& [venue, tok] : j.at("venue_to_token").items()) v.venue_to_token[venue] = tok.get<std::size_t>();
  v.time_bucket_count = j.at("time_bucket_count").get<std::size_t>();
  v.pad_id = j.at("specials").at("PAD").get<std::size_t>();
  v.unk_id = j.at("specials").at("UNK").get<std::size_t>();
  return v;
}

void Vocab::Save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << ToJson().dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write vocab " + path.string());
}

Vocab Vocab::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocab " + path.string());
  return FromJson(nlohmann::json::parse(in));
}

Vocab BuildVocab(const std::vector<data::UserTrajectory>& train) {
  std::set<std::string> venues;
  for (const auto& u : train) {
    for (const auto& c : u.events) venues.insert(c.venue_id);
  }
  if (venues.empty()) throw ConfigError("build_vocab: no venues in training data");
  Vocab v;
  std::size_t next = 0;
  for (const auto& name : venues) v.venue_to_token[name] = next++;
  v.pad_id = next;
  v.unk_id = next + 1;
  return v;
}

std::size_t TimeBucket(std::int64_t timestamp) {
  std::int64_t days = timestamp >= 0 ? timestamp / 86400 : (timestamp - 86399) / 86400;
  std::int64_t secs = timestamp - days * 86400;
  // 1970-01-01 was a Thursday (Monday-based index 3).
  std::int64_t dow = ((days + 3) % 7 + 7) % 7;
  return static_cast<std::size_t>(dow * 8 + (secs / 3600) / 3);
}

TokenizedSequence Tokenize(const data::UserTrajectory& user, const Vocab& vocab) {
  TokenizedSequence seq;
  seq.user_id = user.user_id;
  seq.tokens.reserve(user.events.size());
  for (const auto& c : user.events) {
    seq.tokens.push_back(vocab.Tokenize(c.venue_id));
    seq.time_buckets.push_back(TimeBucket(c.timestamp) % vocab.time_bucket_count);
    seq.timestamps.push_back(c.timestamp);
  }
  return seq;
}

data::UserTrajectory CollapseJitter(const data::UserTrajectory& user, std::int64_t window_seconds) {
  data::UserTrajectory out{user.user_id, {}};
  for (const auto& c : user.events) {
    if (!out.events.empty() && out.events.back().venue_id == c.venue_id &&
        c.timestamp - out.events.back().timestamp < window_seconds) {
      continue;
    }
    out.events.push_back(c);
  }
  return out;
}

EmbeddingTables::EmbeddingTables(std::size_t vocab_size, std::size_t time_buckets, std::size_t d, Rng& rng)
    : phi_loc("phi_loc", Tensor({vocab_size, d})), phi_time("phi_time", Tensor({time_buckets, d})) {
  NormalInit(phi_loc.value, rng, 0.02);
  NormalInit(phi_time.value, rng, 0.02);
}

void EmbeddingTables::Collect(std::vector<Parameter*>& out) {
  out.push_back(&phi_loc);
  out.push_back(&phi_time);
}

Var Embed(Graph& g, EmbeddingTables& tables, std::span<const std::size_t> tokens,
          std::span<const std::size_t> buckets, bool use_time) {
  Var loc = ops::GatherRows(g, g.Param(tables.phi_loc), tokens);
  if (!use_time) return loc;
  if (buckets.size() != tokens.size()) throw DimensionError("embed: token and bucket counts differ");
  return ops::Add(g, loc, ops::GatherRows(g, g.Param(tables.phi_time), buckets));
}

Tensor EmbedOne(const EmbeddingTables& tables, std::size_t token, std::size_t bucket, bool use_time) {
  const Tensor& loc = tables.phi_loc.value;
  const Tensor& tim = tables.phi_time.value;
  std::size_t d = loc.shape()[1];
  if (token >= loc.shape()[0]) throw DimensionError("embed: token index out of range");
  if (use_time && bucket >= tim.shape()[0]) throw DimensionError("embed: time bucket out of range");
  Tensor e({d});
  for (std::size_t c = 0; c < d; ++c) e[c] = loc.at(token, c) + (use_time ? tim.at(bucket, c) : 0.0);
  return e;
}

std::vector<WindowRange> MakeWindows(std::size_t length, std::size_t window, std::size_t stride) {
  if (window < 2) throw ConfigError("window length must be >= 2");
  if (stride < 1) throw ConfigError("window stride must be >= 1");
  std::vector<WindowRange> out;
  if (length < window) {
    if (length >= 2) out.push_back({0, length});
    return out;
  }
  for (std::size_t s = 0; s + window <= length; s += stride) out.push_back({s, window});
  return out;
}

}  // namespace mobfed::encoding
