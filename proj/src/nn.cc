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

#include "mobfed/nn.h"

#include <cmath>

#include "mobfed/errors.h"

namespace mobfed {

void XavierUniform(Tensor& weight, Rng& rng) {
  double fan_out = static_cast<double>(weight.rows());
  double fan_in = static_cast<double>(weight.cols());
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (std::size_t i = 0; i < weight.size(); ++i) weight[i] = rng.Uniform(-limit, limit);
}

void NormalInit(Tensor& t, Rng& rng, double stddev) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.Normal(0.0, stddev);
}

std::size_t CountParameters(const ParamList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

std::size_t CountTrainable(const ParamList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

void SetTrainable(const ParamList& params, bool trainable) {
  for (Parameter* p : params) p->trainable = trainable;
}

void ZeroGrads(const ParamList& params) {
  for (Parameter* p : params) p->ZeroGrad();
}

LinearLayer::LinearLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(name + ".weight", Tensor({out, in})),
      bias(name + ".bias", Tensor({out})),
      has_bias(with_bias) {
  XavierUniform(weight.value, rng);
}

Var LinearLayer::Forward(Graph& g, Var x) {
  Var w = g.Param(weight);
  Var b = has_bias ? g.Param(bias) : Var{};
  return ops::Linear(g, x, w, b);
}

void LinearLayer::Collect(ParamList& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

LayerNormLayer::LayerNormLayer(const std::string& name, std::size_t width)
    : gamma(name + ".gamma", Tensor({width})), beta(name + ".beta", Tensor({width})) {
  gamma.value.Fill(1.0);
}

Var LayerNormLayer::Forward(Graph& g, Var x) { return ops::LayerNorm(g, x, g.Param(gamma), g.Param(beta)); }

void LayerNormLayer::Collect(ParamList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

namespace {

const BlockConfig& Validated(const BlockConfig& cfg) {
  if (cfg.heads == 0 || cfg.hidden % cfg.heads != 0) {
    throw ConfigError("hidden size " + std::to_string(cfg.hidden) + " is not divisible by " +
                      std::to_string(cfg.heads) + " heads");
  }
  return cfg;
}

}  // namespace

TransformerBlock::TransformerBlock(const std::string& name, const BlockConfig& cfg, Rng& rng)
    : ln1(name + ".ln1", Validated(cfg).hidden),
      ln2(name + ".ln2", cfg.hidden),
      wq(name + ".attn.wq", cfg.hidden, cfg.hidden, rng),
      wk(name + ".attn.wk", cfg.hidden, cfg.hidden, rng),
      wv(name + ".attn.wv", cfg.hidden, cfg.hidden, rng),
      wo(name + ".attn.wo", cfg.hidden, cfg.hidden, rng),
      fc1(name + ".ffn.fc1", cfg.hidden, cfg.ffn, rng),
      fc2(name + ".ffn.fc2", cfg.ffn, cfg.hidden, rng),
      cfg_(cfg) {}

Var TransformerBlock::Forward(Graph& g, Var x, std::span<const std::size_t> segments) {
  Var a = ln1.Forward(g, x);
  Var att = ops::CausalAttention(g, wq.Forward(g, a), wk.Forward(g, a), wv.Forward(g, a), cfg_.heads, segments);
  Var x1 = ops::Add(g, x, wo.Forward(g, att));
  Var f = ops::Gelu(g, fc1.Forward(g, ln2.Forward(g, x1)));
  return ops::Add(g, x1, fc2.Forward(g, f));
}

void TransformerBlock::Collect(ParamList& out) {
  ln1.Collect(out);
  wq.Collect(out);
  wk.Collect(out);
  wv.Collect(out);
  wo.Collect(out);
  ln2.Collect(out);
  fc1.Collect(out);
  fc2.Collect(out);
}

}  // namespace mobfed
