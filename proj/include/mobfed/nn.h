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

#ifndef MOBFED_NN_H_
#define MOBFED_NN_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mobfed/autograd.h"
#include "mobfed/rng.h"

namespace mobfed {

using ParamList = std::vector<Parameter*>;

void XavierUniform(Tensor& weight, Rng& rng);
void NormalInit(Tensor& t, Rng& rng, double stddev);

std::size_t CountParameters(const ParamList& params);
std::size_t CountTrainable(const ParamList& params);
void SetTrainable(const ParamList& params, bool trainable);
void ZeroGrads(const ParamList& params);

// y = x·Wᵀ + b with W[out×in]; Xavier-uniform weight, zero bias.
struct LinearLayer {
  LinearLayer() = default;
  LinearLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  Var Forward(Graph& g, Var x);
  void Collect(ParamList& out);

  Parameter weight;
  Parameter bias;
  bool has_bias = true;
};

struct LayerNormLayer {
  LayerNormLayer() = default;
  LayerNormLayer(const std::string& name, std::size_t width);

  Var Forward(Graph& g, Var x);
  void Collect(ParamList& out);

  Parameter gamma;
  Parameter beta;
};

struct BlockConfig {
  std::size_t hidden = 256;
  std::size_t heads = 4;
  std::size_t ffn = 1024;
};

// Pre-norm causal transformer block:
//   x + Attn(LN1(x)),  then  x + FFN(LN2(x)) with a GELU feed-forward.
class TransformerBlock {
 public:
  TransformerBlock(const std::string& name, const BlockConfig& cfg, Rng& rng);

  // x is [N×hidden]; `segments` splits rows into independent sequences.
  Var Forward(Graph& g, Var x, std::span<const std::size_t> segments);
  void Collect(ParamList& out);
  const BlockConfig& config() const { return cfg_; }

  LayerNormLayer ln1, ln2;
  LinearLayer wq, wk, wv, wo, fc1, fc2;

 private:
  BlockConfig cfg_;
};

}  // namespace mobfed

#endif  // MOBFED_NN_H_
