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

// Round scheduling and federated averaging of ClientUpdates.
//
// Transport is simulated in process: clients hand encoded bytes to the
// server, which decodes them itself. The server keeps every received message
// so tests can audit what crossed the boundary.

#ifndef MOBFED_SERVER_H_
#define MOBFED_SERVER_H_

#include <cstdint>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mobfed/client.h"
#include "mobfed/wire.h"

namespace mobfed::server {

struct RoundConfig {
  std::uint32_t total_rounds = 3;
  std::size_t clients_per_round = 20;
  std::uint64_t global_seed = 0;
  int local_epochs = 1;
  client::PrivacyConfig privacy;
  // Weight the mean by window_count instead of 1/|participants|.
  bool weighted = false;
};

struct AggregatedSignal {
  std::uint32_t round = 0;
  std::uint16_t d = 0;
  std::vector<double> mean;  // ō, length d²
  std::vector<std::string> contributing_clients;  // ascending
  std::size_t rejected = 0;

  double Norm() const;
};

// Seeded sample of k ids without replacement, sorted ascending. Depends only
// on (seed, round, registry).
std::vector<std::string> SelectParticipants(std::uint32_t round, std::size_t k, std::uint64_t seed,
                                            std::vector<std::string> registry);

// Mean of the payloads, summed in ascending client_id order. Updates with a
// non-finite payload are dropped and counted. Throws ProtocolError on an empty
// list, mixed round or d, duplicate ids, or when every update was dropped.
AggregatedSignal Aggregate(std::vector<ClientUpdate> updates, bool weighted = false);

// Loopback receiving end. Receive() may be called from several producers.
class FedServer {
 public:
  void Receive(std::string bytes);
  // Decodes and clears the inbox.
  std::vector<ClientUpdate> Drain();
  // Every message received so far, as raw bytes.
  const std::vector<std::string>& traffic() const { return traffic_; }

 private:
  std::mutex mu_;
  std::vector<std::string> inbox_;
  std::vector<std::string> traffic_;
};

struct RoundLog {
  std::uint32_t round = 0;
  std::vector<std::string> participants;
  double mean_norm = 0.0;
  std::size_t rejected_count = 0;
  double wall_ms = 0.0;

  nlohmann::json ToJson() const;
};

// Selects participants from `clients`, lets each train and upload, then
// aggregates. Appends one JSON line to `log` when given.
AggregatedSignal RunRound(std::vector<client::Client>& clients, const RoundConfig& cfg, std::uint32_t round,
                          FedServer& server, std::ostream* log = nullptr);

// All rounds 1..total_rounds in sequence.
std::vector<AggregatedSignal> RunFederation(std::vector<client::Client>& clients, const RoundConfig& cfg,
                                            FedServer& server, std::ostream* log = nullptr);

}  // namespace mobfed::server

#endif  // MOBFED_SERVER_H_
