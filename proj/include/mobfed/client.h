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

// Per-client training and the privatized outer-product summary.
//
// A client owns its token sequence, embedding tables and causal transformer.
// Nothing but the serialized ClientUpdate leaves Client::Participate.

#ifndef MOBFED_CLIENT_H_
#define MOBFED_CLIENT_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mobfed/adam.h"
#include "mobfed/encoding.h"
#include "mobfed/nn.h"
#include "mobfed/wire.h"

namespace mobfed::client {

struct ClientModelConfig {
  std::size_t d = 128;
  std::size_t hidden = 256;
  std::size_t heads = 4;
  std::size_t layers = 6;
  std::size_t ffn = 1024;
  std::size_t vocab_size = 0;
  std::size_t time_buckets = encoding::kDefaultTimeBuckets;
  double lr = 1e-4;
  std::size_t batch = 64;
  std::size_t window = 32;
  std::size_t stride = 1;
  // false bypasses φ_time (semantic-encoding ablation).
  bool use_time = true;
};

// f_θ: in_proj (d→hidden), pre-norm causal blocks, final LayerNorm,
// out_proj (hidden→d).
class ClientNetwork {
 public:
  ClientNetwork(const ClientModelConfig& cfg, Rng& rng);

  // E is [N×d] holding consecutive sequences of the given lengths.
  Var Forward(Graph& g, Var e, std::span<const std::size_t> segments);
  void Collect(ParamList& out);

  LinearLayer in_proj;
  std::vector<TransformerBlock> blocks;
  LayerNormLayer ln_f;
  LinearLayer out_proj;
};

struct ClientModel {
  ClientModel(const ClientModelConfig& cfg, Rng& rng);

  ParamList Params();

  ClientModelConfig cfg;
  encoding::EmbeddingTables tables;
  ClientNetwork net;
};

// H = f_θ(E) for a single window E [W×d]; H[t] predicts E[t+1].
Tensor ClientForward(const Tensor& e, ClientNetwork& net);

// Σ over windows of Σ_t ||h_t - e_{t+1}||², t over the first W-1 positions.
Var WindowLoss(Graph& g, ClientModel& model, const encoding::TokenizedSequence& seq,
               std::span<const encoding::WindowRange> windows);

// One pass over `windows` in a seeded shuffled order, batches of cfg.batch
// (the last batch may be smaller; nothing is padded). Each batch takes one
// Adam step on the batch-mean loss. Returns the mean per-window loss.
double LocalTrainEpoch(ClientModel& model, Adam& opt, const encoding::TokenizedSequence& seq,
                       std::span<const encoding::WindowRange> windows, Rng& rng);

// Embedding matrix [W×d] of one window, no graph.
Tensor WindowEmbeddings(const ClientModel& model, const encoding::TokenizedSequence& seq,
                        const encoding::WindowRange& window);

struct OuterProductRecord {
  Tensor outer;  // [d×d], outer[a][b] = e_t[a]·e_{t+1}[b]
  std::size_t t = 0;
};

// W-1 records from consecutive rows of E [W×d]. Throws DimensionError if W < 2.
std::vector<OuterProductRecord> ComputeOuterProducts(const Tensor& e);

struct PrivacyConfig {
  double sigma = 0.1;
  // Frobenius bound per record; 0 disables clipping.
  double clip_norm = 1.0;
};

// Streams records through clip -> flatten -> add N(0, σ²) per coordinate,
// keeping the running sum; Finish() returns the mean.
class Privatizer {
 public:
  Privatizer(std::size_t d, const PrivacyConfig& cfg, Rng& rng);

  void Add(const Tensor& outer);
  // Same as Add(Outer(a, b)) without materializing the product.
  void AddPair(std::span<const double> a, std::span<const double> b);
  std::size_t count() const { return count_; }
  // Throws ContractError when no record was added.
  ClientUpdate Finish(const std::string& client_id, std::uint32_t round) const;

 private:
  std::size_t d_;
  PrivacyConfig cfg_;
  Rng& rng_;
  std::vector<double> sum_;
  std::size_t count_ = 0;
};

ClientUpdate Privatize(std::span<const OuterProductRecord> records, const PrivacyConfig& cfg, Rng& rng,
                       const std::string& client_id = "", std::uint32_t round = 0);

// Row-major flattening and its inverse.
std::vector<double> Vec(const Tensor& m);
Tensor Unvec(std::span<const double> v, std::size_t d);

// The client boundary. Model state persists across rounds as an f32
// snapshot; optimizer moments are reset each participation.
class Client {
 public:
  Client(std::string id, encoding::TokenizedSequence data, const ClientModelConfig& cfg,
         std::uint64_t init_seed);

  const std::string& id() const { return id_; }
  std::size_t window_count() const { return windows_.size(); }

  // Trains `local_epochs` epochs, privatizes the outer products of every
  // window and returns the encoded ClientUpdate.
  std::string Participate(std::uint32_t round, std::uint64_t global_seed, const PrivacyConfig& privacy,
                          int local_epochs);

  double last_loss() const { return last_loss_; }

 private:
  std::unique_ptr<ClientModel> Materialize() const;

  std::string id_;
  encoding::TokenizedSequence data_;
  ClientModelConfig cfg_;
  std::uint64_t init_seed_;
  std::vector<encoding::WindowRange> windows_;
  std::string snapshot_;
  double last_loss_ = 0.0;
};

}  // namespace mobfed::client

#endif  // MOBFED_CLIENT_H_
