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

#include "mobfed/server.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "mobfed/errors.h"
#include "mobfed/rng.h"

namespace mobfed::server {

double AggregatedSignal::Norm() const {
  double s = 0.0;
  for (double v : mean) s += v * v;
  return std::sqrt(s);
}

std::vector<std::string> SelectParticipants(std::uint32_t round, std::size_t k, std::uint64_t seed,
                                            std::vector<std::string> registry) {
  if (registry.empty()) throw ConfigError("client registry is empty");
  if (k < 1 || k > registry.size()) {
    throw ConfigError("clients_per_round " + std::to_string(k) + " outside [1, " +
                      std::to_string(registry.size()) + "]");
  }
  std::sort(registry.begin(), registry.end());
  Rng rng(DeriveSeed(seed, 0x5e1ec7ULL, round));
  // partial Fisher-Yates
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.UniformInt(registry.size() - i));
    std::swap(registry[i], registry[j]);
  }
  registry.resize(k);
  std::sort(registry.begin(), registry.end());
  return registry;
}

AggregatedSignal Aggregate(std::vector<ClientUpdate> updates, bool weighted) {
  if (updates.empty()) throw ProtocolError("aggregate: no updates");
  const std::uint32_t round = updates.front().round;
  const std::uint16_t d = updates.front().d;
  for (const auto& u : updates) {
    if (u.round != round) throw ProtocolError("aggregate: mixed rounds");
    if (u.d != d) throw ProtocolError("aggregate: mixed dimensions");
    if (u.payload.size() != static_cast<std::size_t>(d) * d) throw ProtocolError("aggregate: payload is not d^2");
  }
  std::sort(updates.begin(), updates.end(),
            [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
  for (std::size_t i = 1; i < updates.size(); ++i) {
    if (updates[i].client_id == updates[i - 1].client_id) {
      throw ProtocolError("aggregate: duplicate update from " + updates[i].client_id);
    }
  }

  AggregatedSignal out;
  out.round = round;
  out.d = d;
  out.mean.assign(static_cast<std::size_t>(d) * d, 0.0);
  double total_weight = 0.0;
  for (const auto& u : updates) {
    bool finite = std::all_of(u.payload.begin(), u.payload.end(), [](double v) { return std::isfinite(v); });
    if (!finite) {
      ++out.rejected;
      continue;
    }
    double w = weighted ? static_cast<double>(u.window_count) : 1.0;
    for (std::size_t i = 0; i < out.mean.size(); ++i) out.mean[i] += w * u.payload[i];
    total_weight += w;
    out.contributing_clients.push_back(u.client_id);
  }
  if (out.contributing_clients.empty()) throw ProtocolError("aggregate: every update was rejected");
  if (total_weight <= 0.0) throw ProtocolError("aggregate: zero total weight");
  for (double& v : out.mean) v /= total_weight;
  return out;
}

void FedServer::Receive(std::string bytes) {
  std::lock_guard<std::mutex> lock(mu_);
  traffic_.push_back(bytes);
  inbox_.push_back(std::move(bytes));
}

std::vector<ClientUpdate> FedServer::Drain() {
  std::vector<std::string> inbox;
  {
    std::lock_guard<std::mutex> lock(mu_);
    inbox.swap(inbox_);
  }
  std::vector<ClientUpdate> out;
  out.reserve(inbox.size());
  for (const auto& b : inbox) out.push_back(DecodeClientUpdate(b));
  return out;
}

nlohmann::json RoundLog::ToJson() const {
  return {{"round", round},
          {"participants", participants},
          {"mean_norm", mean_norm},
          {"rejected_count", rejected_count},
          {"wall_ms", wall_ms}};
}

AggregatedSignal RunRound(std::vector<client::Client>& clients, const RoundConfig& cfg, std::uint32_t round,
                          FedServer& server, std::ostream* log) {
  auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, client::Client*> by_id;
  std::vector<std::string> registry;
  for (auto& c : clients) {
    if (c.window_count() == 0) continue;
    by_id[c.id()] = &c;
    registry.push_back(c.id());
  }
  auto chosen = SelectParticipants(round, std::min(cfg.clients_per_round, registry.size()), cfg.global_seed,
                                   registry);
  for (const auto& id : chosen) {
    server.Receive(by_id.at(id)->Participate(round, cfg.global_seed, cfg.privacy, cfg.local_epochs));
  }
  AggregatedSignal sig = Aggregate(server.Drain(), cfg.weighted);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (log) {
    RoundLog rec{round, chosen, sig.Norm(), sig.rejected, ms};
    *log << rec.ToJson().dump() << "\n";
  }
  return sig;
}

std::vector<AggregatedSignal> RunFederation(std::vector<client::Client>& clients, const RoundConfig& cfg,
                                            FedServer& server, std::ostream* log) {
  if (cfg.total_rounds < 1) throw ConfigError("total_rounds must be >= 1");
  std::vector<AggregatedSignal> out;
  for (std::uint32_t r = 1; r <= cfg.total_rounds; ++r) out.push_back(RunRound(clients, cfg, r, server, log));
  return out;
}

}  // namespace mobfed::server
