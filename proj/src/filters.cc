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

#include "mobfed/filters.h"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "mobfed/errors.h"
#include "mobfed/rng.h"

namespace mobfed::data {

void FilterConfig::Validate() const {
  if (min_user_checkins < 1 || min_venue_visits < 1 || max_window_days < 1) {
    throw ConfigError("filter thresholds must all be >= 1");
  }
}

std::vector<UserTrajectory> ApplyFilters(std::vector<UserTrajectory> users, const FilterConfig& cfg) {
  cfg.Validate();
  const std::int64_t window = static_cast<std::int64_t>(cfg.max_window_days) * 86400;
  for (auto& u : users) {
    if (u.events.empty()) continue;
    std::int64_t cutoff = u.events.back().timestamp - window;
    std::erase_if(u.events, [cutoff](const CheckIn& c) { return c.timestamp < cutoff; });
  }

  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, int> visits;
    for (const auto& u : users) {
      for (const auto& c : u.events) ++visits[c.venue_id];
    }
    for (auto& u : users) {
      std::size_t before = u.events.size();
      std::erase_if(u.events, [&](const CheckIn& c) { return visits[c.venue_id] < cfg.min_venue_visits; });
      changed |= u.events.size() != before;
    }
    std::size_t before = users.size();
    std::erase_if(users, [&](const UserTrajectory& u) {
      return static_cast<int>(u.events.size()) < cfg.min_user_checkins;
    });
    changed |= users.size() != before;
  }
  std::sort(users.begin(), users.end(),
            [](const UserTrajectory& a, const UserTrajectory& b) { return a.user_id < b.user_id; });
  return users;
}

DatasetSplit SplitDataset(const std::vector<UserTrajectory>& users, std::uint64_t seed, SplitMode mode) {
  if (users.size() < 5) {
    throw ConfigError("split_dataset needs at least 5 trajectories, got " + std::to_string(users.size()));
  }
  DatasetSplit split;
  split.seed = seed;
  split.mode = mode;

  if (mode == SplitMode::kByEvent) {
    for (const auto& u : users) {
      std::size_t n = u.events.size();
      std::size_t n_valid = n / 5, n_test = n / 5, n_train = n - n_valid - n_test;
      auto take = [&](std::size_t from, std::size_t count, std::vector<UserTrajectory>& dst) {
        if (count == 0) return;
        dst.push_back(UserTrajectory{u.user_id, {u.events.begin() + from, u.events.begin() + from + count}});
      };
      take(0, n_train, split.train);
      take(n_train, n_valid, split.valid);
      take(n_train + n_valid, n_test, split.test);
    }
    return split;
  }

  std::vector<std::size_t> order(users.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return users[a].user_id < users[b].user_id; });
  Rng rng(DeriveSeed(seed, 0x5b11u));
  rng.Shuffle(order);
  std::size_t n = order.size();
  std::size_t n_valid = n / 5, n_test = n / 5, n_train = n - n_valid - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    const UserTrajectory& u = users[order[i]];
    if (i < n_train) {
      split.train.push_back(u);
    } else if (i < n_train + n_valid) {
      split.valid.push_back(u);
    } else {
      split.test.push_back(u);
    }
  }
  auto by_id = [](const UserTrajectory& a, const UserTrajectory& b) { return a.user_id < b.user_id; };
  std::sort(split.train.begin(), split.train.end(), by_id);
  std::sort(split.valid.begin(), split.valid.end(), by_id);
  std::sort(split.test.begin(), split.test.end(), by_id);
  return split;
}

namespace {

nlohmann::json Ids(const std::vector<UserTrajectory>& part) {
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& u : part) ids.push_back(u.user_id);
  return ids;
}

}  // namespace

nlohmann::json SplitManifest(const DatasetSplit& split, const FilterConfig& cfg) {
  return {{"seed", split.seed},
          {"mode", split.mode == SplitMode::kByUser ? "by_user" : "by_event"},
          {"filter",
           {{"min_user_checkins", cfg.min_user_checkins},
            {"min_venue_visits", cfg.min_venue_visits},
            {"max_window_days", cfg.max_window_days}}},
          {"train", Ids(split.train)},
          {"valid", Ids(split.valid)},
          {"test", Ids(split.test)}};
}

DatasetSplit SplitFromManifest(const nlohmann::json& manifest, const std::vector<UserTrajectory>& users) {
  std::string mode = manifest.at("mode").get<std::string>();
  std::uint64_t seed = manifest.at("seed").get<std::uint64_t>();
  if (mode == "by_event") return SplitDataset(users, seed, SplitMode::kByEvent);
  std::map<std::string, const UserTrajectory*> by_id;
  for (const auto& u : users) by_id[u.user_id] = &u;
  DatasetSplit split;
  split.seed = seed;
  auto fill = [&](const char* key, std::vector<UserTrajectory>& dst) {
    for (const auto& id : manifest.at(key)) {
      auto it = by_id.find(id.get<std::string>());
      if (it == by_id.end()) throw ConfigError("split manifest names unknown user " + id.get<std::string>());
      dst.push_back(*it->second);
    }
  };
  fill("train", split.train);
  fill("valid", split.valid);
  fill("test", split.test);
  return split;
}

}  // namespace mobfed::data
