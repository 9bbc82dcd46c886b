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

#include "mobfed/llm.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mobfed/encoding.h"
#include "mobfed/errors.h"

namespace mobfed::llm {
namespace {

struct WindowRef {
  std::size_t seq = 0;
  encoding::WindowRange range;
};

std::vector<WindowRef> CollectWindows(const std::vector<TokenSeq>& seqs, std::size_t window, std::size_t stride) {
  std::vector<WindowRef> out;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    for (const auto& r : encoding::MakeWindows(seqs[s].size(), window, stride)) out.push_back({s, r});
  }
  return out;
}

// Flattened tokens, segment lengths, and the next-token targets of a batch.
struct Batch {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> segments;
  std::vector<std::size_t> pred_rows;
  std::vector<std::size_t> targets;
};

Batch MakeBatch(const std::vector<TokenSeq>& seqs, std::span<const WindowRef> windows) {
  Batch b;
  std::size_t row = 0;
  for (const auto& w : windows) {
    const TokenSeq& s = seqs[w.seq];
    for (std::size_t i = 0; i < w.range.length; ++i) b.tokens.push_back(s[w.range.start + i]);
    for (std::size_t i = 0; i + 1 < w.range.length; ++i) {
      b.pred_rows.push_back(row + i);
      b.targets.push_back(s[w.range.start + i + 1]);
    }
    b.segments.push_back(w.range.length);
    row += w.range.length;
  }
  return b;
}

std::vector<std::size_t> Order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.Shuffle(order);
  return order;
}

}  // namespace

FrozenLM::FrozenLM(const LMConfig& cfg, Rng& rng)
    : tok_emb("lm.tok_emb", Tensor({cfg.vocab_size, cfg.d_llm})),
      pos_emb("lm.pos_emb", Tensor({cfg.max_len, cfg.d_llm})),
      ln_f("lm.ln_f", cfg.d_llm),
      lm_head("lm.head", Tensor({cfg.vocab_size, cfg.d_llm})),
      cfg_(cfg) {
  if (cfg.vocab_size == 0) throw ConfigError("language model needs a vocabulary size");
  if (cfg.layers == 0) throw ConfigError("language model needs at least one layer");
  NormalInit(tok_emb.value, rng, 0.02);
  NormalInit(pos_emb.value, rng, 0.02);
  BlockConfig bc{cfg.d_llm, cfg.heads, cfg.ffn};
  blocks.reserve(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) blocks.emplace_back("lm.block" + std::to_string(l), bc, rng);
  XavierUniform(lm_head.value, rng);
}

Var FrozenLM::Embed(Graph& g, std::span<const std::size_t> tokens, std::span<const std::size_t> segments) {
  std::vector<std::size_t> pos;
  pos.reserve(tokens.size());
  for (std::size_t len : segments) {
    if (len > cfg_.max_len) {
      throw DimensionError("sequence of " + std::to_string(len) + " exceeds max_len " + std::to_string(cfg_.max_len));
    }
    for (std::size_t i = 0; i < len; ++i) pos.push_back(i);
  }
  if (pos.size() != tokens.size()) throw DimensionError("segments do not cover the tokens");
  for (std::size_t t : tokens) {
    if (t >= cfg_.vocab_size) throw DimensionError("token id out of range");
  }
  return ops::Add(g, ops::GatherRows(g, g.Param(tok_emb), tokens), ops::GatherRows(g, g.Param(pos_emb), pos));
}

Var FrozenLM::RunBlocks(Graph& g, Var x, std::span<const std::size_t> segments, std::size_t from, std::size_t to) {
  for (std::size_t l = from; l < to; ++l) x = blocks[l].Forward(g, x, segments);
  return x;
}

Var FrozenLM::PretrainLogits(Graph& g, std::span<const std::size_t> tokens, std::span<const std::size_t> segments) {
  Var x = RunBlocks(g, Embed(g, tokens, segments), segments, 0, blocks.size());
  return ops::Linear(g, FinalNorm(g, x), g.Param(lm_head));
}

ParamList FrozenLM::Params() {
  ParamList out{&tok_emb, &pos_emb};
  for (auto& b : blocks) b.Collect(out);
  ln_f.Collect(out);
  out.push_back(&lm_head);
  return out;
}

void FrozenLM::Freeze() { SetTrainable(Params(), false); }

bool FrozenLM::frozen() const {
  auto params = const_cast<FrozenLM*>(this)->Params();
  return std::none_of(params.begin(), params.end(), [](const Parameter* p) { return p->trainable; });
}

std::vector<double> PretrainToyLM(FrozenLM& lm, const std::vector<TokenSeq>& train, const PretrainConfig& cfg) {
  if (cfg.window > lm.config().max_len) throw ConfigError("pretrain window exceeds max_len");
  auto windows = CollectWindows(train, cfg.window, cfg.stride);
  if (windows.empty()) throw ConfigError("pretrain_toy_lm: empty corpus");
  ParamList params = lm.Params();
  SetTrainable(params, true);
  Adam opt(params, AdamOptions{cfg.lr});
  std::vector<double> losses;
  for (int e = 0; e < cfg.epochs; ++e) {
    auto order = Order(windows.size(), DeriveSeed(cfg.seed, 0x1a, static_cast<std::uint64_t>(e)));
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      std::vector<WindowRef> chunk;
      for (std::size_t i = s; i < std::min(order.size(), s + cfg.batch); ++i) chunk.push_back(windows[order[i]]);
      Batch b = MakeBatch(train, chunk);
      Graph g;
      Var logits = lm.PretrainLogits(g, b.tokens, b.segments);
      Var ce = ops::CrossEntropy(g, ops::GatherRows(g, logits, b.pred_rows), b.targets);
      total += g.value(ce)[0];
      count += b.targets.size();
      opt.ZeroGrad();
      g.Backward(ops::Scale(g, ce, 1.0 / static_cast<double>(b.targets.size())));
      opt.Step();
    }
    losses.push_back(total / static_cast<double>(count));
  }
  lm.Freeze();
  return losses;
}

double Perplexity(FrozenLM& lm, const std::vector<TokenSeq>& seqs, std::size_t window) {
  auto windows = CollectWindows(seqs, window, window);
  if (windows.empty()) throw ConfigError("perplexity: no windows");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < windows.size(); s += 64) {
    std::span<const WindowRef> chunk(windows.data() + s, std::min<std::size_t>(64, windows.size() - s));
    Batch b = MakeBatch(seqs, chunk);
    Graph g;
    Var logits = lm.PretrainLogits(g, b.tokens, b.segments);
    total += g.value(ops::CrossEntropy(g, ops::GatherRows(g, logits, b.pred_rows), b.targets))[0];
    count += b.targets.size();
  }
  return std::exp(total / static_cast<double>(count));
}

Projection::Projection(const ProjectionConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.linear) {
    w0 = LinearLayer("psi.linear", cfg.d2, cfg.d_llm, rng);
  } else {
    w0 = LinearLayer("psi.w0", cfg.d2, cfg.d1, rng);
    w1 = LinearLayer("psi.w1", cfg.d1, cfg.d_llm, rng);
  }
  if (cfg.zero_out) (cfg.linear ? w0 : w1).weight.value.Fill(0.0);
}

Var Projection::Forward(Graph& g, Var o) {
  if (g.value(o).size() != cfg_.d2) {
    throw DimensionError("projection expects " + std::to_string(cfg_.d2) + " inputs, got " +
                         std::to_string(g.value(o).size()));
  }
  if (cfg_.linear) return w0.Forward(g, o);
  return w1.Forward(g, ops::Gelu(g, w0.Forward(g, o)));
}

Tensor Projection::Apply(std::span<const double> o) {
  if (o.size() != cfg_.d2) throw DimensionError("projection input has wrong length");
  Graph g;
  Var h = Forward(g, g.Constant(Tensor({1, o.size()}, std::vector<double>(o.begin(), o.end()))));
  return g.value(h).Reshaped({cfg_.d_llm});
}

ParamList Projection::Params() {
  ParamList out;
  w0.Collect(out);
  if (!cfg_.linear) w1.Collect(out);
  return out;
}

OutputHead::OutputHead(std::size_t vocab_size, std::size_t d_llm, Rng& rng)
    : w_out("head.w_out", Tensor({vocab_size, d_llm})) {
  XavierUniform(w_out.value, rng);
}

void InjectionConfig::Validate(std::size_t layers) const {
  if (lk < 1 || lk > layers) {
    throw ConfigError("injection layer " + std::to_string(lk) + " outside [1, " + std::to_string(layers) + "]");
  }
}

Var InjectForward(Graph& g, std::span<const std::size_t> tokens, std::span<const std::size_t> segments, Var h,
                  FrozenLM& lm, OutputHead& head, const InjectionConfig& cfg) {
  const std::size_t L = lm.blocks.size();
  cfg.Validate(L);
  Var x = lm.Embed(g, tokens, segments);
  if (cfg.enabled && h.valid()) {
    x = lm.RunBlocks(g, x, segments, 0, cfg.lk - 1);
    x = ops::AddRowVector(g, x, h, cfg.scale);
    x = lm.RunBlocks(g, x, segments, cfg.lk - 1, L);
  } else {
    x = lm.RunBlocks(g, x, segments, 0, L);
  }
  return ops::Linear(g, lm.FinalNorm(g, x), g.Param(head.w_out));
}

Tensor InjectForward(std::span<const std::size_t> tokens, std::span<const double> h_tilde, FrozenLM& lm,
                     OutputHead& head, const InjectionConfig& cfg) {
  Graph g;
  std::size_t seg[] = {tokens.size()};
  Var h;
  if (!h_tilde.empty()) h = g.Constant(Tensor({h_tilde.size()}, std::vector<double>(h_tilde.begin(), h_tilde.end())));
  return g.value(InjectForward(g, tokens, seg, h, lm, head, cfg));
}

std::vector<double> TrainAdapters(FrozenLM& lm, Projection& psi, OutputHead& head, const InjectionConfig& inj,
                                  const std::vector<std::vector<double>>& signals,
                                  const std::vector<TokenSeq>& train, const AdapterTrainConfig& cfg) {
  if (!lm.frozen()) throw ContractError("train_adapters: language model is not frozen");
  const std::size_t L = lm.blocks.size();
  inj.Validate(L);
  if (cfg.epochs < 1) throw ConfigError("adapter epochs must be >= 1");
  if (inj.enabled && signals.empty()) throw ConfigError("train_adapters: no round signals");
  auto windows = CollectWindows(train, cfg.window, cfg.stride);
  if (windows.empty()) throw ConfigError("train_adapters: no training windows");

  // The LM is frozen, so everything below the injection point (or, without
  // injection, the whole backbone) is computed once.
  const std::size_t cut = inj.enabled ? inj.lk - 1 : L;
  std::vector<Tensor> cache(windows.size());
  for (std::size_t s = 0; s < windows.size(); s += 64) {
    std::span<const WindowRef> chunk(windows.data() + s, std::min<std::size_t>(64, windows.size() - s));
    Batch b = MakeBatch(train, chunk);
    Graph g;
    Var x = lm.RunBlocks(g, lm.Embed(g, b.tokens, b.segments), b.segments, 0, cut);
    if (!inj.enabled) x = lm.FinalNorm(g, x);
    const Tensor& v = g.value(x);
    std::size_t d = v.shape()[1], row = 0;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      std::size_t len = chunk[i].range.length;
      cache[s + i] = Tensor({len, d}, std::vector<double>(v.data() + row * d, v.data() + (row + len) * d));
      row += len;
    }
  }

  ParamList params = psi.Params();
  for (Parameter* p : head.Params()) params.push_back(p);
  Adam opt(params, AdamOptions{cfg.lr});
  std::vector<double> losses;
  for (int e = 0; e < cfg.epochs; ++e) {
    Tensor signal_row;
    if (inj.enabled) {
      std::size_t idx = static_cast<std::size_t>(e) * signals.size() / static_cast<std::size_t>(cfg.epochs);
      const auto& sig = signals[std::min(idx, signals.size() - 1)];
      signal_row = Tensor({1, sig.size()}, sig);
    }
    auto order = Order(windows.size(), DeriveSeed(cfg.seed, 0xad, static_cast<std::uint64_t>(e)));
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      std::vector<WindowRef> chunk;
      std::vector<const Tensor*> rows;
      for (std::size_t i = s; i < std::min(order.size(), s + cfg.batch); ++i) {
        chunk.push_back(windows[order[i]]);
        rows.push_back(&cache[order[i]]);
      }
      Batch b = MakeBatch(train, chunk);
      std::size_t d = rows.front()->shape()[1];
      Tensor xs({b.tokens.size(), d});
      std::size_t off = 0;
      for (const Tensor* r : rows) {
        std::copy(r->data(), r->data() + r->size(), xs.data() + off);
        off += r->size();
      }
      Graph g;
      Var z = g.Constant(std::move(xs));
      if (inj.enabled) {
        Var o = g.ConstantRef(signal_row);
        Var h = psi.Forward(g, o);
        z = ops::AddRowVector(g, z, h, inj.scale);
        z = lm.FinalNorm(g, lm.RunBlocks(g, z, b.segments, cut, L));
      }
      Var logits = ops::Linear(g, ops::GatherRows(g, z, b.pred_rows), g.Param(head.w_out));
      Var ce = ops::CrossEntropy(g, logits, b.targets);
      Var loss = ops::Scale(g, ce, 1.0 / static_cast<double>(b.targets.size()));
      total += g.value(loss)[0];
      ++steps;
      opt.ZeroGrad();
      g.Backward(loss);
      opt.Step();
    }
    losses.push_back(total / static_cast<double>(steps));
  }
  return losses;
}

std::vector<std::size_t> RankLogits(std::span<const double> logits, std::size_t k) {
  if (k > logits.size()) throw ConfigError("k exceeds the vocabulary size");
  std::vector<std::size_t> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> PredictNext(std::span<const std::size_t> tokens, std::span<const double> h_tilde,
                                     FrozenLM& lm, OutputHead& head, const InjectionConfig& inj, std::size_t k) {
  if (tokens.empty()) throw ConfigError("predict_next: empty token sequence");
  Tensor logits = InjectForward(tokens, h_tilde, lm, head, inj);
  std::size_t v = logits.shape()[1];
  return RankLogits(std::span<const double>(logits.data() + (tokens.size() - 1) * v, v), k);
}

}  // namespace mobfed::llm
