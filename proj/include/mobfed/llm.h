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

// Frozen toy language model over the mobility vocabulary, the projection Ψ
// from the aggregated signal into its hidden width, and the output head.
//
// Layer indices in InjectionConfig are 1-based: lk = 2 adds scale·h̃ to the
// hidden state entering the second block.

#ifndef MOBFED_LLM_H_
#define MOBFED_LLM_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mobfed/adam.h"
#include "mobfed/nn.h"

namespace mobfed::llm {

using TokenSeq = std::vector<std::size_t>;

struct LMConfig {
  std::size_t vocab_size = 0;
  std::size_t d_llm = 256;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t ffn = 1024;
  // Longest sequence the positional table covers.
  std::size_t max_len = 32;
};

class FrozenLM {
 public:
  FrozenLM(const LMConfig& cfg, Rng& rng);

  const LMConfig& config() const { return cfg_; }

  // tok_emb[x] + pos_emb[position within segment] -> [N×d_llm].
  Var Embed(Graph& g, std::span<const std::size_t> tokens, std::span<const std::size_t> segments);
  // Applies blocks [from, to).
  Var RunBlocks(Graph& g, Var x, std::span<const std::size_t> segments, std::size_t from, std::size_t to);
  Var FinalNorm(Graph& g, Var x) { return ln_f.Forward(g, x); }
  // Next-token logits through the pretraining head.
  Var PretrainLogits(Graph& g, std::span<const std::size_t> tokens, std::span<const std::size_t> segments);

  // Backbone plus pretraining head.
  ParamList Params();
  void Freeze();
  bool frozen() const;

  Parameter tok_emb;
  Parameter pos_emb;
  std::vector<TransformerBlock> blocks;
  LayerNormLayer ln_f;
  Parameter lm_head;

 private:
  LMConfig cfg_;
};

struct PretrainConfig {
  int epochs = 4;
  std::size_t batch = 64;  // windows per step
  double lr = 1e-3;
  std::size_t window = 32;
  std::size_t stride = 16;
  std::uint64_t seed = 0;
};

// Next-token cross-entropy on every training window, then Freeze(). Returns
// the mean per-token loss of each epoch. Throws ConfigError on an empty corpus.
std::vector<double> PretrainToyLM(FrozenLM& lm, const std::vector<TokenSeq>& train, const PretrainConfig& cfg);

// exp(mean next-token loss) through the pretraining head, over windows of
// `window` tokens.
double Perplexity(FrozenLM& lm, const std::vector<TokenSeq>& seqs, std::size_t window);

struct ProjectionConfig {
  std::size_t d2 = 128 * 128;
  std::size_t d1 = 512;
  std::size_t d_llm = 256;
  // Single linear map d² -> d_llm instead of the two-layer MLP.
  bool linear = false;
  // Zero the output weight so a fresh Ψ injects exactly its bias (zero).
  bool zero_out = false;
};

// h̃ = W1 · GELU(W0 · ō + b0) + b1, or W · ō + b in linear mode.
class Projection {
 public:
  Projection(const ProjectionConfig& cfg, Rng& rng);

  const ProjectionConfig& config() const { return cfg_; }
  // o is [1×d²]; returns [1×d_llm].
  Var Forward(Graph& g, Var o);
  // Throws DimensionError when o.size() != d².
  Tensor Apply(std::span<const double> o);
  ParamList Params();

  LinearLayer w0;  // d² -> d1, or d² -> d_llm in linear mode
  LinearLayer w1;  // d1 -> d_llm, unused in linear mode

 private:
  ProjectionConfig cfg_;
};

struct OutputHead {
  OutputHead(std::size_t vocab_size, std::size_t d_llm, Rng& rng);
  ParamList Params() { return {&w_out}; }

  Parameter w_out;  // [|V|×d_llm]
};

struct InjectionConfig {
  std::size_t lk = 2;
  double scale = 1.0;
  // false skips injection entirely.
  bool enabled = true;

  // Throws ConfigError unless 1 <= lk <= layers.
  void Validate(std::size_t layers) const;
};

// Logits [N×|V|] = W_out · LN_f(z), where the hidden state entering block lk
// gets scale·h̃ added at every position. `h` may be invalid (no injection).
Var InjectForward(Graph& g, std::span<const std::size_t> tokens, std::span<const std::size_t> segments, Var h,
                  FrozenLM& lm, OutputHead& head, const InjectionConfig& cfg);
// Single-sequence convenience without gradients. Empty h_tilde means none.
Tensor InjectForward(std::span<const std::size_t> tokens, std::span<const double> h_tilde, FrozenLM& lm,
                     OutputHead& head, const InjectionConfig& cfg);

struct AdapterTrainConfig {
  int epochs = 10;
  std::size_t batch = 64;  // windows per step
  double lr = 1e-4;
  std::size_t window = 32;
  std::size_t stride = 16;
  std::uint64_t seed = 0;
};

// Next-token cross-entropy (mean over predicted positions of a batch) with
// only Ψ and W_out updated. Epoch e conditions on
// signals[e·|signals|/epochs]. Returns the mean pre-step batch loss of each
// epoch. Throws ContractError if the LM is not frozen.
std::vector<double> TrainAdapters(FrozenLM& lm, Projection& psi, OutputHead& head, const InjectionConfig& inj,
                                  const std::vector<std::vector<double>>& signals,
                                  const std::vector<TokenSeq>& train, const AdapterTrainConfig& cfg);

// Indices of the logits sorted by descending value, ties by ascending index,
// truncated to k.
std::vector<std::size_t> RankLogits(std::span<const double> logits, std::size_t k);

// Top-k next tokens after the last position of `tokens`.
std::vector<std::size_t> PredictNext(std::span<const std::size_t> tokens, std::span<const double> h_tilde,
                                     FrozenLM& lm, OutputHead& head, const InjectionConfig& inj, std::size_t k);

}  // namespace mobfed::llm

#endif  // MOBFED_LLM_H_
