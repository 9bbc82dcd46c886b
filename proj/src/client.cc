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

#include "mobfed/client.h"

#include <cmath>
#include <numeric>

#include "mobfed/checkpoint.h"
#include "mobfed/errors.h"

namespace mobfed::client {

ClientNetwork::ClientNetwork(const ClientModelConfig& cfg, Rng& rng)
    : in_proj("client.in_proj", cfg.d, cfg.hidden, rng), ln_f("client.ln_f", cfg.hidden) {
  BlockConfig bc{cfg.hidden, cfg.heads, cfg.ffn};
  blocks.reserve(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) blocks.emplace_back("client.block" + std::to_string(l), bc, rng);
  out_proj = LinearLayer("client.out_proj", cfg.hidden, cfg.d, rng);
}

Var ClientNetwork::Forward(Graph& g, Var e, std::span<const std::size_t> segments) {
  Var x = in_proj.Forward(g, e);
  for (auto& b : blocks) x = b.Forward(g, x, segments);
  return out_proj.Forward(g, ln_f.Forward(g, x));
}

void ClientNetwork::Collect(ParamList& out) {
  in_proj.Collect(out);
  for (auto& b : blocks) b.Collect(out);
  ln_f.Collect(out);
  out_proj.Collect(out);
}

ClientModel::ClientModel(const ClientModelConfig& c, Rng& rng)
    : cfg(c), tables(c.vocab_size, c.time_buckets, c.d, rng), net(c, rng) {
  if (c.vocab_size == 0) throw ConfigError("client model needs a vocabulary size");
}

ParamList ClientModel::Params() {
  ParamList out;
  tables.Collect(out);
  net.Collect(out);
  return out;
}

Tensor ClientForward(const Tensor& e, ClientNetwork& net) {
  if (e.rank() != 2 || e.shape()[1] != net.in_proj.weight.value.shape()[1]) {
    throw DimensionError("client_forward: expected [W x d] input, got " + ShapeString(e.shape()));
  }
  Graph g;
  std::size_t seg[] = {e.shape()[0]};
  Var h = net.Forward(g, g.ConstantRef(e), seg);
  return g.value(h);
}

Var WindowLoss(Graph& g, ClientModel& model, const encoding::TokenizedSequence& seq,
               std::span<const encoding::WindowRange> windows) {
  std::vector<std::size_t> tokens, buckets, segments, pred_rows, target_rows;
  std::size_t row = 0;
  for (const auto& w : windows) {
    if (w.length < 2 || w.start + w.length > seq.size()) throw DimensionError("window out of range");
    for (std::size_t i = 0; i < w.length; ++i) {
      tokens.push_back(seq.tokens[w.start + i]);
      buckets.push_back(seq.time_buckets[w.start + i]);
    }
    for (std::size_t i = 0; i + 1 < w.length; ++i) {
      pred_rows.push_back(row + i);
      target_rows.push_back(row + i + 1);
    }
    segments.push_back(w.length);
    row += w.length;
  }
  Var e = encoding::Embed(g, model.tables, tokens, buckets, model.cfg.use_time);
  Var h = model.net.Forward(g, e, segments);
  return ops::MseSeqLoss(g, ops::GatherRows(g, h, pred_rows), ops::GatherRows(g, e, target_rows));
}

double LocalTrainEpoch(ClientModel& model, Adam& opt, const encoding::TokenizedSequence& seq,
                       std::span<const encoding::WindowRange> windows, Rng& rng) {
  if (windows.empty()) throw ContractError("local_train_epoch: empty window set");
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  rng.Shuffle(order);
  const std::size_t batch = std::max<std::size_t>(1, model.cfg.batch);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    std::size_t end = std::min(order.size(), start + batch);
    std::vector<encoding::WindowRange> chunk;
    chunk.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) chunk.push_back(windows[order[i]]);
    opt.ZeroGrad();
    Graph g;
    Var loss = WindowLoss(g, model, seq, chunk);
    total += g.value(loss)[0];
    Var mean = ops::Scale(g, loss, 1.0 / static_cast<double>(chunk.size()));
    g.Backward(mean);
    opt.Step();
  }
  return total / static_cast<double>(windows.size());
}

Tensor WindowEmbeddings(const ClientModel& model, const encoding::TokenizedSequence& seq,
                        const encoding::WindowRange& window) {
  std::size_t d = model.tables.dim();
  Tensor e({window.length, d});
  const Tensor& loc = model.tables.phi_loc.value;
  const Tensor& tim = model.tables.phi_time.value;
  for (std::size_t i = 0; i < window.length; ++i) {
    std::size_t tok = seq.tokens[window.start + i];
    std::size_t bucket = seq.time_buckets[window.start + i];
    for (std::size_t c = 0; c < d; ++c) {
      e.at(i, c) = loc.at(tok, c) + (model.cfg.use_time ? tim.at(bucket, c) : 0.0);
    }
  }
  return e;
}

std::vector<OuterProductRecord> ComputeOuterProducts(const Tensor& e) {
  if (e.rank() != 2 || e.shape()[0] < 2) throw DimensionError("compute_outer_products needs at least 2 rows");
  std::size_t w = e.shape()[0], d = e.shape()[1];
  std::vector<OuterProductRecord> out;
  out.reserve(w - 1);
  for (std::size_t t = 0; t + 1 < w; ++t) {
    out.push_back({Outer(std::span<const double>(e.data() + t * d, d),
                         std::span<const double>(e.data() + (t + 1) * d, d)),
                   t});
  }
  return out;
}

namespace {

// Steps the scale down until the rounded, rescaled norm is within the bound.
template <typename NormFn>
double TightenClip(double factor, double clip, NormFn scaled_norm) {
  while (scaled_norm(factor) > clip) factor = std::nextafter(factor, 0.0);
  return factor;
}

}  // namespace

Privatizer::Privatizer(std::size_t d, const PrivacyConfig& cfg, Rng& rng)
    : d_(d), cfg_(cfg), rng_(rng), sum_(d * d, 0.0) {
  if (cfg.sigma < 0.0) throw ConfigError("sigma must be >= 0");
  if (cfg.clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
}

void Privatizer::Add(const Tensor& outer) {
  if (outer.size() != d_ * d_) throw DimensionError("privatize: record is not d x d");
  double norm = 0.0;
  for (double v : outer.span()) norm += v * v;
  norm = std::sqrt(norm);
  double factor = 1.0;
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) {
    factor = TightenClip(cfg_.clip_norm / norm, cfg_.clip_norm, [&](double f) {
      double n2 = 0.0;
      for (double v : outer.span()) n2 += (v * f) * (v * f);
      return std::sqrt(n2);
    });
  }
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    double v = outer[i] * factor;
    if (cfg_.sigma > 0.0) v += cfg_.sigma * rng_.Normal();
    sum_[i] += v;
  }
  ++count_;
}

void Privatizer::AddPair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != d_ || b.size() != d_) throw DimensionError("privatize: embedding width mismatch");
  double na = 0.0, nb = 0.0;
  for (double v : a) na += v * v;
  for (double v : b) nb += v * v;
  // ||a ⊗ b||_F = ||a|| · ||b||
  double norm = std::sqrt(na) * std::sqrt(nb);
  double factor = 1.0;
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) {
    factor = TightenClip(cfg_.clip_norm / norm, cfg_.clip_norm, [&](double f) {
      double n2 = 0.0;
      for (std::size_t i = 0; i < d_; ++i) {
        for (std::size_t j = 0; j < d_; ++j) {
          double v = a[i] * b[j] * f;
          n2 += v * v;
        }
      }
      return std::sqrt(n2);
    });
  }
  for (std::size_t i = 0; i < d_; ++i) {
    double* row = sum_.data() + i * d_;
    for (std::size_t j = 0; j < d_; ++j) {
      double v = a[i] * b[j] * factor;
      if (cfg_.sigma > 0.0) v += cfg_.sigma * rng_.Normal();
      row[j] += v;
    }
  }
  ++count_;
}

ClientUpdate Privatizer::Finish(const std::string& client_id, std::uint32_t round) const {
  if (count_ == 0) throw ContractError("privatize: no records");
  ClientUpdate u;
  u.client_id = client_id;
  u.round = round;
  u.window_count = static_cast<std::uint32_t>(count_);
  u.d = static_cast<std::uint16_t>(d_);
  u.sigma = static_cast<float>(cfg_.sigma);
  u.clip = static_cast<float>(cfg_.clip_norm);
  u.payload.resize(sum_.size());
  double inv = 1.0 / static_cast<double>(count_);
  for (std::size_t i = 0; i < sum_.size(); ++i) u.payload[i] = sum_[i] * inv;
  return u;
}

ClientUpdate Privatize(std::span<const OuterProductRecord> records, const PrivacyConfig& cfg, Rng& rng,
                       const std::string& client_id, std::uint32_t round) {
  if (records.empty()) throw ContractError("privatize: no records");
  Privatizer p(records.front().outer.rows(), cfg, rng);
  for (const auto& r : records) p.Add(r.outer);
  return p.Finish(client_id, round);
}

std::vector<double> Vec(const Tensor& m) { return std::vector<double>(m.span().begin(), m.span().end()); }

Tensor Unvec(std::span<const double> v, std::size_t d) {
  if (v.size() != d * d) throw DimensionError("unvec: length is not d^2");
  return Tensor({d, d}, std::vector<double>(v.begin(), v.end()));
}

Client::Client(std::string id, encoding::TokenizedSequence data, const ClientModelConfig& cfg,
               std::uint64_t init_seed)
    : id_(std::move(id)), data_(std::move(data)), cfg_(cfg), init_seed_(init_seed) {
  windows_ = encoding::MakeWindows(data_.size(), cfg_.window, cfg_.stride);
}

std::unique_ptr<ClientModel> Client::Materialize() const {
  Rng rng(init_seed_);
  auto model = std::make_unique<ClientModel>(cfg_, rng);
  if (!snapshot_.empty()) DeserializeParams(snapshot_, model->Params());
  return model;
}

std::string Client::Participate(std::uint32_t round, std::uint64_t global_seed, const PrivacyConfig& privacy,
                                int local_epochs) {
  if (windows_.empty()) throw ContractError("client " + id_ + " has no windows");
  auto model = Materialize();
  ParamList params = model->Params();
  Adam opt(params, AdamOptions{cfg_.lr});
  Rng rng(ClientRoundSeed(global_seed, id_, round));
  for (int e = 0; e < local_epochs; ++e) last_loss_ = LocalTrainEpoch(*model, opt, data_, windows_, rng);

  Privatizer priv(cfg_.d, privacy, rng);
  for (const auto& w : windows_) {
    Tensor e = WindowEmbeddings(*model, data_, w);
    std::size_t d = cfg_.d;
    for (std::size_t t = 0; t + 1 < w.length; ++t) {
      priv.AddPair(std::span<const double>(e.data() + t * d, d), std::span<const double>(e.data() + (t + 1) * d, d));
    }
  }
  snapshot_ = SerializeParams(params);
  return EncodeClientUpdate(priv.Finish(id_, round));
}

}  // namespace mobfed::client
