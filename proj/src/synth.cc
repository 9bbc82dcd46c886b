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

#include "mobfed/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mobfed/errors.h"
#include "mobfed/rng.h"

namespace mobfed::data {
namespace {

constexpr int kDayParts = 4;

std::string VenueName(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "v%03d", v);
  return buf;
}

std::string UserName(int u) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "u%04d", u);
  return buf;
}

}  // namespace

SynthCorpus SynthGenerate(const SynthParams& p) {
  if (p.n_venues < 3) throw ConfigError("synth_generate needs at least 3 venues");
  if (p.n_users < 1 || p.days < 1 || p.checkins_per_day <= 0.0) throw ConfigError("synth_generate: bad sizes");
  if (p.primary_prob < 0 || p.daypart_prob < 0 || p.primary_prob + p.daypart_prob > 1.0) {
    throw ConfigError("synth_generate: transition probabilities must sum to <= 1");
  }
  const int nv = p.n_venues;
  Rng rng(DeriveSeed(p.seed, 0x51a7u));

  std::vector<double> lat(nv), lon(nv);
  for (int v = 0; v < nv; ++v) {
    lat[v] = std::round(rng.Uniform(40.60, 40.85) * 1e6) / 1e6;
    lon[v] = std::round(rng.Uniform(-74.05, -73.85) * 1e6) / 1e6;
  }
  auto other_than = [&](int cur) {
    int v = static_cast<int>(rng.UniformInt(nv - 1));
    return v >= cur ? v + 1 : v;
  };
  // primary[prev][cur], daypart[part][prev][cur]
  std::vector<std::vector<int>> primary(nv, std::vector<int>(nv));
  std::vector<std::vector<std::vector<int>>> daypart(
      kDayParts, std::vector<std::vector<int>>(nv, std::vector<int>(nv)));
  if (p.branching > 0) {
    // Each venue gets `branching` exits; the previous venue picks among them.
    const int nb = std::min(p.branching, nv - 1);
    std::vector<std::vector<int>> exits(nv);
    for (int b = 0; b < nv; ++b) {
      while (static_cast<int>(exits[b].size()) < nb) {
        int v = other_than(b);
        if (std::find(exits[b].begin(), exits[b].end(), v) == exits[b].end()) exits[b].push_back(v);
      }
    }
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) primary[a][b] = exits[b][rng.UniformInt(nb)];
  } else {
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) primary[a][b] = other_than(b);
  }
  for (int k = 0; k < kDayParts; ++k)
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) daypart[k][a][b] = other_than(b);

  const double mean_gap = 86400.0 / p.checkins_per_day;
  const double mu = std::log(mean_gap) - 0.5 * p.gap_log_sigma * p.gap_log_sigma;
  const std::int64_t end = p.start_epoch + static_cast<std::int64_t>(p.days) * 86400;
  const int n_fav = std::min(p.favourites, nv);

  SynthCorpus corpus;
  corpus.users.reserve(p.n_users);
  for (int u = 0; u < p.n_users; ++u) {
    std::vector<int> fav(nv);
    for (int v = 0; v < nv; ++v) fav[v] = v;
    rng.Shuffle(fav);
    fav.resize(n_fav);

    UserTrajectory traj{UserName(u), {}};
    std::int64_t t = p.start_epoch + static_cast<std::int64_t>(rng.Uniform(0.0, 86400.0));
    int prev = fav[rng.UniformInt(n_fav)];
    int cur = fav[rng.UniformInt(n_fav)];
    while (t < end) {
      traj.events.push_back(CheckIn{traj.user_id, t, lat[cur], lon[cur], VenueName(cur), ""});
      double gap = std::exp(rng.Normal(mu, p.gap_log_sigma));
      t += std::max<std::int64_t>(60, static_cast<std::int64_t>(gap));
      int part = static_cast<int>(((t % 86400) / 3600) / 6);
      double r = rng.Uniform();
      int next;
      if (r < p.primary_prob) {
        next = primary[prev][cur];
      } else if (r < p.primary_prob + p.daypart_prob) {
        next = daypart[part][prev][cur];
      } else {
        next = fav[rng.UniformInt(n_fav)];
      }
      prev = cur;
      cur = next;
    }
    corpus.users.push_back(std::move(traj));
  }

  corpus.manifest = {{"generator", "second_order_markov"},
                     {"n_users", p.n_users},
                     {"n_venues", p.n_venues},
                     {"days", p.days},
                     {"seed", p.seed},
                     {"checkins_per_day", p.checkins_per_day},
                     {"gap_log_sigma", p.gap_log_sigma},
                     {"primary_prob", p.primary_prob},
                     {"daypart_prob", p.daypart_prob},
                     {"favourites", n_fav},
                     {"branching", p.branching},
                     {"start_epoch", p.start_epoch},
                     {"day_parts", kDayParts},
                     {"sampler", std::string(kGaussianSampler)},
                     {"primary_successor", primary},
                     {"daypart_successor", daypart}};
  return corpus;
}

}  // namespace mobfed::data
