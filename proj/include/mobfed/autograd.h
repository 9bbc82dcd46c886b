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

// Tape-based reverse-mode differentiation.
//
// A Graph records every op in execution order; Backward() replays the tape in
// reverse. Parameters enter the tape by reference, and their gradients are
// accumulated directly into Parameter::grad. Frozen parameters (trainable ==
// false) are treated as constants, so no gradient work is spent on them.

#ifndef MOBFED_AUTOGRAD_H_
#define MOBFED_AUTOGRAD_H_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mobfed/tensor.h"

namespace mobfed {

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value, bool trainable = true);

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void ZeroGrad() { grad.Fill(0.0); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, Var self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var Constant(Tensor value);
  // Constant that refers to caller-owned storage; `value` must outlive the graph.
  Var ConstantRef(const Tensor& value);
  // Leaf bound to `p`. Requires grad iff p.trainable.
  Var Param(Parameter& p);
  // Leaf with its own storage that requires grad (for differentiating with
  // respect to an intermediate input).
  Var Input(Tensor value);

  // Appends an op result. `backward` is invoked only when the result requires
  // grad and received a gradient. Throws NumericError on non-finite output.
  Var Emit(Tensor value, std::span<const Var> parents, BackwardFn backward, const char* op);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Gradient buffer, zero-initialized on first access.
  Tensor& grad(Var v);
  bool has_grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 for a one-element loss and back-propagates.
  void Backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor own;
    const Tensor* ext = nullptr;
    Tensor own_grad;
    Tensor* ext_grad = nullptr;
    bool requires_grad = false;
    bool grad_ready = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

namespace ops {

// a[m×k] · b[k×n].
Var MatMul(Graph& g, Var a, Var b);
// x[N×in] · Wᵀ + b, with W[out×in] and optional b[out].
Var Linear(Graph& g, Var x, Var weight, Var bias = {});
Var Add(Graph& g, Var a, Var b);
// x[N×h] + scale · v broadcast to every row; v has h elements.
Var AddRowVector(Graph& g, Var x, Var v, double scale = 1.0);
Var Scale(Graph& g, Var x, double factor);
// Row-wise layer normalization over the last dimension.
Var LayerNorm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);
// Exact erf-form GELU, elementwise.
Var Gelu(Graph& g, Var x);
// Multi-head causal self-attention core on pre-projected q, k, v [N×h].
// Rows are split into consecutive independent sequences of the given lengths;
// position t attends to positions ≤ t of its own sequence only.
Var CausalAttention(Graph& g, Var q, Var k, Var v, std::size_t heads,
                    std::span<const std::size_t> segments);
// Rows `ids` of table[n×d] -> [ids.size()×d]; gradients scatter-add.
Var GatherRows(Graph& g, Var table, std::span<const std::size_t> ids);
// Σ_rows ||h - target||², as a one-element tensor.
Var MseSeqLoss(Graph& g, Var h, Var target);
// Σ_rows -log softmax(logits[r])[targets[r]], as a one-element tensor.
Var CrossEntropy(Graph& g, Var logits, std::span<const std::size_t> targets);
// Σ of all entries of a one-element-per-var list.
Var Sum(Graph& g, std::span<const Var> scalars);

}  // namespace ops

}  // namespace mobfed

#endif  // MOBFED_AUTOGRAD_H_
