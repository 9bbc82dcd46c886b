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

// Synthetic check-in corpora with planted second-order dynamics.
//
// Each user walks a second-order Markov chain over venues. From the pair
// (previous, current) the next venue is
//   - the pair's primary successor with probability primary_prob,
//   - the pair's successor for the current 6-hour day part with
//     probability daypart_prob,
//   - otherwise a venue from the user's personal favourites.
// Gaps between check-ins are log-normal.

#ifndef MOBFED_SYNTH_H_
#define MOBFED_SYNTH_H_

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "mobfed/checkin.h"

namespace mobfed::data {

struct SynthParams {
  int n_users = 200;
  int n_venues = 50;
  int days = 120;
  std::uint64_t seed = 0;
  double checkins_per_day = 1.5;
  double gap_log_sigma = 0.8;
  double primary_prob = 0.6;
  double daypart_prob = 0.25;
  int favourites = 8;
  // Exits per venue for the primary successor; 0 lets every (prev, cur)
  // pair pick any venue.
  int branching = 2;
  // Monday 2012-04-02 00:00:00 UTC.
  std::int64_t start_epoch = 1333324800;
};

struct SynthCorpus {
  std::vector<UserTrajectory> users;
  // Generator parameters and planted transition tables.
  nlohmann::json manifest;
};

SynthCorpus SynthGenerate(const SynthParams& params);

}  // namespace mobfed::data

#endif  // MOBFED_SYNTH_H_
