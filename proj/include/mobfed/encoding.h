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

#ifndef MOBFED_ENCODING_H_
#define MOBFED_ENCODING_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mobfed/autograd.h"
#include "mobfed/checkin.h"
#include "mobfed/rng.h"

namespace mobfed::encoding {

inline constexpr std::size_t kDefaultTimeBuckets = 56;  // 7 days × 8 three-hour slots

// Venue tokens are dense in [0, n) in venue-id order; PAD = n, UNK = n + 1.
struct Vocab {
  std::map<std::string, std::size_t> venue_to_token;
  std::size_t time_bucket_count = kDefaultTimeBuckets;
  std::size_t pad_id = 0;
  std::size_t unk_id = 1;

  std::size_t size() const { return venue_to_token.size() + 2; }
  // UNK for venues not seen when the vocab was built.
  std::size_t Tokenize(const std::string& venue_id) const;

  nlohmann::json ToJson() const;
  static Vocab FromJson(const nlohmann::json& j);
  void Save(const std::filesystem::path& path) const;
  static Vocab Load(const std::filesystem::path& path);
};

// Builds from the training split only. Throws ConfigError on empty input.
Vocab BuildVocab(const std::vector<data::UserTrajectory>& train);

// day_of_week (Monday = 0) × 8 + hour / 3, in UTC.
std::size_t TimeBucket(std::int64_t timestamp);

struct TokenizedSequence {
  std::string user_id;
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> time_buckets;
  std::vector<std::int64_t> timestamps;

  std::size_t size() const { return tokens.size(); }
};

TokenizedSequence Tokenize(const data::UserTrajectory& user, const Vocab& vocab);

// Collapses consecutive check-ins at the same venue less than `window_seconds`
// apart, keeping the first.
data::UserTrajectory CollapseJitter(const data::UserTrajectory& user, std::int64_t window_seconds = 300);

// φ_loc [|V|×d] and φ_time [buckets×d], initialized N(0, 0.02²).
struct EmbeddingTables {
  EmbeddingTables(std::size_t vocab_size, std::size_t time_buckets, std::size_t d, Rng& rng);

  std::size_t dim() const { return phi_loc.value.shape()[1]; }
  void Collect(std::vector<Parameter*>& out);

  Parameter phi_loc;
  Parameter phi_time;
};

// e_t = φ_loc(x_t) + φ_time(bucket_t) for each position -> [n×d]. With
// `use_time` false only φ_loc is used.
Var Embed(Graph& g, EmbeddingTables& tables, std::span<const std::size_t> tokens,
          std::span<const std::size_t> buckets, bool use_time = true);
// Single position, no graph.
Tensor EmbedOne(const EmbeddingTables& tables, std::size_t token, std::size_t bucket, bool use_time = true);

struct WindowRange {
  std::size_t start = 0;
  std::size_t length = 0;
  bool operator==(const WindowRange&) const = default;
};

// Ranges [s, s+W) for s = 0, stride, ... while they fit; a sequence shorter
// than W yields one whole-sequence window if it has at least 2 positions.
std::vector<WindowRange> MakeWindows(std::size_t length, std::size_t window, std::size_t stride);

}  // namespace mobfed::encoding

#endif  // MOBFED_ENCODING_H_
