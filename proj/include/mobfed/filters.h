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

#ifndef MOBFED_FILTERS_H_
#define MOBFED_FILTERS_H_

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "mobfed/checkin.h"

namespace mobfed::data {

struct FilterConfig {
  int min_user_checkins = 10;
  int min_venue_visits = 10;
  int max_window_days = 120;

  void Validate() const;
};

// Truncates every user to the events within max_window_days of that user's
// last event, then drops rare venues and light users until neither filter
// removes anything. Output users are sorted by id.
std::vector<UserTrajectory> ApplyFilters(std::vector<UserTrajectory> users, const FilterConfig& cfg);

enum class SplitMode {
  kByUser,   // shuffle users, partition 60/20/20
  kByEvent,  // every user's events split chronologically 60/20/20
};

struct DatasetSplit {
  std::vector<UserTrajectory> train;
  std::vector<UserTrajectory> valid;
  std::vector<UserTrajectory> test;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::kByUser;
};

// valid and test get floor(n / 5) each; train takes the remainder. Requires at
// least 5 users (ConfigError otherwise).
DatasetSplit SplitDataset(const std::vector<UserTrajectory>& users, std::uint64_t seed,
                          SplitMode mode = SplitMode::kByUser);

// {seed, mode, filter, train, valid, test} with user id lists.
nlohmann::json SplitManifest(const DatasetSplit& split, const FilterConfig& cfg);
// Re-materializes a split from its manifest and the (filtered) users.
DatasetSplit SplitFromManifest(const nlohmann::json& manifest, const std::vector<UserTrajectory>& users);

}  // namespace mobfed::data

#endif  // MOBFED_FILTERS_H_
