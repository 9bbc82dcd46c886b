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

#include "mobfed/autograd.h"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>

#include "mobfed/errors.h"

namespace mobfed {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

Parameter::Parameter(std::string n, Tensor v, bool t)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(t) {}

Var Graph::Constant(Tensor value) {
  Node n;
  n.own = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::ConstantRef(const Tensor& value) {
  Node n;
  n.ext = &value;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::Param(Parameter& p) {
  Node n;
  n.ext = &p.value;
  n.requires_grad = p.trainable;
  if (p.trainable) {
    if (!p.grad.SameShape(p.value)) p.grad = Tensor(p.value.shape());
    n.ext_grad = &p.grad;
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::Input(Tensor value) {
  Node n;
  n.own = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::Emit(Tensor value, std::span<const Var> parents, BackwardFn backward, const char* op) {
  CheckFinite(value, op);
  Node n;
  n.own = std::move(value);
  for (Var p : parents) {
    if (p.valid() && nodes_[p.id].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.ext ? *n.ext : n.own;
}

Tensor& Graph::grad(Var v) {
  Node& n = nodes_[v.id];
  n.grad_ready = true;
  if (n.ext_grad) return *n.ext_grad;
  if (!n.own_grad.SameShape(value(v))) n.own_grad = Tensor(value(v).shape());
  return n.own_grad;
}

bool Graph::has_grad(Var v) const { return nodes_[v.id].grad_ready; }

void Graph::Backward(Var loss) {
  if (value(loss).size() != 1) throw DimensionError("Backward expects a one-element loss");
  if (!requires_grad(loss)) return;
  grad(loss)[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.grad_ready && n.backward) n.backward(*this, Var{i});
  }
}

namespace ops {
namespace {

const Tensor& Val(Graph& g, Var v) { return g.value(v); }

void RequireMatrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a matrix, got " + ShapeString(t.shape()));
}

}  // namespace

Var MatMul(Graph& g, Var a, Var b) {
  const Tensor& A = Val(g, a);
  const Tensor& B = Val(g, b);
  Tensor out = mobfed::MatMul(A, B);
  Var parents[] = {a, b};
  return g.Emit(std::move(out), parents, [a, b](Graph& gr, Var self) {
    const Tensor& A = gr.value(a);
    const Tensor& B = gr.value(b);
    std::size_t m = A.shape()[0], k = A.shape()[1], n = B.shape()[1];
    CMapMat dC(gr.grad(self).data(), m, n);
    if (gr.requires_grad(a)) {
      MapMat dA(gr.grad(a).data(), m, k);
      dA.noalias() += dC * CMapMat(B.data(), k, n).transpose();
    }
    if (gr.requires_grad(b)) {
      MapMat dB(gr.grad(b).data(), k, n);
      dB.noalias() += CMapMat(A.data(), m, k).transpose() * dC;
    }
  }, "matmul");
}

Var Linear(Graph& g, Var x, Var weight, Var bias) {
  const Tensor& X = Val(g, x);
  const Tensor& W = Val(g, weight);
  RequireMatrix(X, "linear");
  RequireMatrix(W, "linear");
  std::size_t n = X.shape()[0], in = X.shape()[1], out_dim = W.shape()[0];
  if (W.shape()[1] != in) {
    throw DimensionError("linear: input width " + std::to_string(in) + " vs weight " + ShapeString(W.shape()));
  }
  Tensor Y({n, out_dim});
  MapMat y(Y.data(), n, out_dim);
  y.noalias() = CMapMat(X.data(), n, in) * CMapMat(W.data(), out_dim, in).transpose();
  if (bias.valid()) {
    const Tensor& B = Val(g, bias);
    if (B.size() != out_dim) throw DimensionError("linear: bias size mismatch");
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(B.data(), out_dim);
  }
  Var parents[] = {x, weight, bias};
  return g.Emit(std::move(Y), parents, [x, weight, bias](Graph& gr, Var self) {
    const Tensor& X = gr.value(x);
    const Tensor& W = gr.value(weight);
    std::size_t n = X.shape()[0], in = X.shape()[1], out_dim = W.shape()[0];
    CMapMat dY(gr.grad(self).data(), n, out_dim);
    if (gr.requires_grad(x)) {
      MapMat dX(gr.grad(x).data(), n, in);
      dX.noalias() += dY * CMapMat(W.data(), out_dim, in);
    }
    if (gr.requires_grad(weight)) {
      MapMat dW(gr.grad(weight).data(), out_dim, in);
      dW.noalias() += dY.transpose() * CMapMat(X.data(), n, in);
    }
    if (bias.valid() && gr.requires_grad(bias)) {
      Eigen::Map<Eigen::RowVectorXd> dB(gr.grad(bias).data(), out_dim);
      dB += dY.colwise().sum();
    }
  }, "linear");
}

Var Add(Graph& g, Var a, Var b) {
  const Tensor& A = Val(g, a);
  const Tensor& B = Val(g, b);
  if (!A.SameShape(B)) {
    throw DimensionError("add shapes differ: " + ShapeString(A.shape()) + " vs " + ShapeString(B.shape()));
  }
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  Var parents[] = {a, b};
  return g.Emit(std::move(out), parents, [a, b](Graph& gr, Var self) {
    const Tensor& gout = gr.grad(self);
    for (Var p : {a, b}) {
      if (!gr.requires_grad(p)) continue;
      Tensor& gp = gr.grad(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gout[i];
    }
  }, "add");
}

Var AddRowVector(Graph& g, Var x, Var v, double scale) {
  const Tensor& X = Val(g, x);
  const Tensor& V = Val(g, v);
  RequireMatrix(X, "add_row_vector");
  std::size_t n = X.shape()[0], h = X.shape()[1];
  if (V.size() != h) throw DimensionError("add_row_vector: vector size mismatch");
  Tensor out = X;
  for (std::size_t r = 0; r < n; ++r) {
    double* row = out.data() + r * h;
    for (std::size_t c = 0; c < h; ++c) row[c] += scale * V[c];
  }
  Var parents[] = {x, v};
  return g.Emit(std::move(out), parents, [x, v, scale](Graph& gr, Var self) {
    const Tensor& gout = gr.grad(self);
    std::size_t n = gout.shape()[0], h = gout.shape()[1];
    if (gr.requires_grad(x)) {
      Tensor& gx = gr.grad(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i];
    }
    if (gr.requires_grad(v)) {
      Tensor& gv = gr.grad(v);
      for (std::size_t r = 0; r < n; ++r) {
        const double* row = gout.data() + r * h;
        for (std::size_t c = 0; c < h; ++c) gv[c] += scale * row[c];
      }
    }
  }, "add_row_vector");
}

Var Scale(Graph& g, Var x, double factor) {
  Tensor out = Val(g, x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  Var parents[] = {x};
  return g.Emit(std::move(out), parents, [x, factor](Graph& gr, Var self) {
    const Tensor& gout = gr.grad(self);
    Tensor& gx = gr.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gout[i];
  }, "scale");
}

Var LayerNorm(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const Tensor& X = Val(g, x);
  const Tensor& G = Val(g, gamma);
  const Tensor& B = Val(g, beta);
  RequireMatrix(X, "layer_norm");
  std::size_t n = X.shape()[0], h = X.shape()[1];
  if (G.size() != h || B.size() != h) throw DimensionError("layer_norm: affine size mismatch");
  Tensor out({n, h});
  auto xhat = std::make_shared<Tensor>(Shape{n, h});
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = X.data() + r * h;
    double mean = 0.0;
    for (std::size_t c = 0; c < h; ++c) mean += xr[c];
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t c = 0; c < h; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(h);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* xh = xhat->data() + r * h;
    double* o = out.data() + r * h;
    for (std::size_t c = 0; c < h; ++c) {
      xh[c] = (xr[c] - mean) * is;
      o[c] = xh[c] * G[c] + B[c];
    }
  }
  Var parents[] = {x, gamma, beta};
  return g.Emit(std::move(out), parents, [x, gamma, beta, xhat, inv_std](Graph& gr, Var self) {
    const Tensor& gout = gr.grad(self);
    const Tensor& G = gr.value(gamma);
    std::size_t n = gout.shape()[0], h = gout.shape()[1];
    if (gr.requires_grad(gamma)) {
      Tensor& gg = gr.grad(gamma);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < h; ++c) gg[c] += gout[r * h + c] * (*xhat)[r * h + c];
    }
    if (gr.requires_grad(beta)) {
      Tensor& gb = gr.grad(beta);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < h; ++c) gb[c] += gout[r * h + c];
    }
    if (gr.requires_grad(x)) {
      Tensor& gx = gr.grad(x);
      std::vector<double> dxhat(h);
      for (std::size_t r = 0; r < n; ++r) {
        const double* xh = xhat->data() + r * h;
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t c = 0; c < h; ++c) {
          dxhat[c] = gout[r * h + c] * G[c];
          sum_d += dxhat[c];
          sum_dx += dxhat[c] * xh[c];
        }
        double is = (*inv_std)[r];
        double inv_h = 1.0 / static_cast<double>(h);
        for (std::size_t c = 0; c < h; ++c) {
          gx[r * h + c] += is * (dxhat[c] - inv_h * sum_d - xh[c] * inv_h * sum_dx);
        }
      }
    }
  }, "layer_norm");
}

Var Gelu(Graph& g, Var x) {
  const Tensor& X = Val(g, x);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = mobfed::Gelu(X[i]);
  Var parents[] = {x};
  return g.Emit(std::move(out), parents, [x](Graph& gr, Var self) {
    const Tensor& X = gr.value(x);
    const Tensor& gout = gr.grad(self);
    Tensor& gx = gr.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * GeluGrad(X[i]);
  }, "gelu");
}

Var CausalAttention(Graph& g, Var q, Var k, Var v, std::size_t heads,
                    std::span<const std::size_t> segments) {
  const Tensor& Q = Val(g, q);
  const Tensor& K = Val(g, k);
  const Tensor& V = Val(g, v);
  RequireMatrix(Q, "causal_attention");
  if (!Q.SameShape(K) || !Q.SameShape(V)) throw DimensionError("causal_attention: q/k/v shapes differ");
  std::size_t n = Q.shape()[0], h = Q.shape()[1];
  if (heads == 0 || h % heads != 0) {
    throw ConfigError("hidden size " + std::to_string(h) + " not divisible by " + std::to_string(heads) + " heads");
  }
  std::size_t total = 0;
  for (std::size_t s : segments) total += s;
  if (total != n) throw DimensionError("causal_attention: segment lengths do not cover all rows");

  std::size_t dh = h / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto seg = std::make_shared<std::vector<std::size_t>>(segments.begin(), segments.end());
  // Attention probabilities, one T×T block per (segment, head).
  auto probs = std::make_shared<std::vector<RowMat>>();
  probs->reserve(seg->size() * heads);

  Tensor out({n, h});
  std::size_t row0 = 0;
  for (std::size_t len : *seg) {
    for (std::size_t hd = 0; hd < heads; ++hd) {
      std::size_t off = row0 * h + hd * dh;
      CStridedMap Qh(Q.data() + off, len, dh, Eigen::OuterStride<>(h));
      CStridedMap Kh(K.data() + off, len, dh, Eigen::OuterStride<>(h));
      CStridedMap Vh(V.data() + off, len, dh, Eigen::OuterStride<>(h));
      RowMat S = (Qh * Kh.transpose()) * scale;
      for (std::size_t i = 0; i < len; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, S(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          S(i, j) = std::exp(S(i, j) - mx);
          sum += S(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) S(i, j) /= sum;
        for (std::size_t j = i + 1; j < len; ++j) S(i, j) = 0.0;
      }
      StridedMap Oh(out.data() + off, len, dh, Eigen::OuterStride<>(h));
      Oh.noalias() = S * Vh;
      probs->push_back(std::move(S));
    }
    row0 += len;
  }

  Var parents[] = {q, k, v};
  return g.Emit(std::move(out), parents, [q, k, v, heads, seg, probs, scale](Graph& gr, Var self) {
    const Tensor& Q = gr.value(q);
    const Tensor& K = gr.value(k);
    const Tensor& V = gr.value(v);
    const Tensor& gout = gr.grad(self);
    std::size_t h = Q.shape()[1];
    std::size_t dh = h / heads;
    bool need_q = gr.requires_grad(q), need_k = gr.requires_grad(k), need_v = gr.requires_grad(v);
    double* gq = need_q ? gr.grad(q).data() : nullptr;
    double* gk = need_k ? gr.grad(k).data() : nullptr;
    double* gv = need_v ? gr.grad(v).data() : nullptr;
    std::size_t row0 = 0, idx = 0;
    for (std::size_t len : *seg) {
      for (std::size_t hd = 0; hd < heads; ++hd, ++idx) {
        const RowMat& P = (*probs)[idx];
        std::size_t off = row0 * h + hd * dh;
        CStridedMap dO(gout.data() + off, len, dh, Eigen::OuterStride<>(h));
        CStridedMap Qh(Q.data() + off, len, dh, Eigen::OuterStride<>(h));
        CStridedMap Kh(K.data() + off, len, dh, Eigen::OuterStride<>(h));
        CStridedMap Vh(V.data() + off, len, dh, Eigen::OuterStride<>(h));
        if (need_v) {
          StridedMap dV(gv + off, len, dh, Eigen::OuterStride<>(h));
          dV.noalias() += P.transpose() * dO;
        }
        if (!need_q && !need_k) continue;
        RowMat dP = dO * Vh.transpose();
        RowMat dS(len, len);
        for (std::size_t i = 0; i < len; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j <= i; ++j) dot += dP(i, j) * P(i, j);
          for (std::size_t j = 0; j < len; ++j) dS(i, j) = j <= i ? P(i, j) * (dP(i, j) - dot) * scale : 0.0;
        }
        if (need_q) {
          StridedMap dQ(gq + off, len, dh, Eigen::OuterStride<>(h));
          dQ.noalias() += dS * Kh;
        }
        if (need_k) {
          StridedMap dK(gk + off, len, dh, Eigen::OuterStride<>(h));
          dK.noalias() += dS.transpose() * Qh;
        }
      }
      row0 += len;
    }
  }, "causal_attention");
}

Var GatherRows(Graph& g, Var table, std::span<const std::size_t> ids) {
  const Tensor& T = Val(g, table);
  RequireMatrix(T, "gather_rows");
  std::size_t n = T.shape()[0], d = T.shape()[1];
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= n) {
      throw DimensionError("gather_rows: index " + std::to_string(ids[r]) + " out of range " + std::to_string(n));
    }
    std::copy_n(T.data() + ids[r] * d, d, out.data() + r * d);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(ids.begin(), ids.end());
  Var parents[] = {table};
  return g.Emit(std::move(out), parents, [table, idx](Graph& gr, Var self) {
    const Tensor& gout = gr.grad(self);
    Tensor& gt = gr.grad(table);
    std::size_t d = gout.shape()[1];
    for (std::size_t r = 0; r < idx->size(); ++r) {
      double* dst = gt.data() + (*idx)[r] * d;
      const double* src = gout.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  }, "gather_rows");
}

Var MseSeqLoss(Graph& g, Var h, Var target) {
  double loss = mobfed::MseSeqLoss(Val(g, h), Val(g, target));
  Var parents[] = {h, target};
  return g.Emit(Tensor({1}, {loss}), parents, [h, target](Graph& gr, Var self) {
    const Tensor& H = gr.value(h);
    const Tensor& T = gr.value(target);
    double gs = gr.grad(self)[0];
    if (gr.requires_grad(h)) {
      Tensor& gh = gr.grad(h);
      for (std::size_t i = 0; i < gh.size(); ++i) gh[i] += 2.0 * gs * (H[i] - T[i]);
    }
    if (gr.requires_grad(target)) {
      Tensor& gt = gr.grad(target);
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= 2.0 * gs * (H[i] - T[i]);
    }
  }, "mse_seq_loss");
}

Var CrossEntropy(Graph& g, Var logits, std::span<const std::size_t> targets) {
  const Tensor& L = Val(g, logits);
  RequireMatrix(L, "cross_entropy");
  std::size_t n = L.shape()[0], classes = L.shape()[1];
  if (targets.size() != n) throw DimensionError("cross_entropy: one target per row required");
  auto probs = std::make_shared<Tensor>(Softmax(L, 1));
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    loss += mobfed::CrossEntropy(std::span<const double>(L.data() + r * classes, classes), targets[r]);
  }
  auto tg = std::make_shared<std::vector<std::size_t>>(targets.begin(), targets.end());
  Var parents[] = {logits};
  return g.Emit(Tensor({1}, {loss}), parents, [logits, probs, tg](Graph& gr, Var self) {
    double gs = gr.grad(self)[0];
    Tensor& gl = gr.grad(logits);
    std::size_t classes = probs->shape()[1];
    for (std::size_t r = 0; r < tg->size(); ++r) {
      for (std::size_t c = 0; c < classes; ++c) gl[r * classes + c] += gs * (*probs)[r * classes + c];
      gl[r * classes + (*tg)[r]] -= gs;
    }
  }, "cross_entropy");
}

Var Sum(Graph& g, std::span<const Var> scalars) {
  double total = 0.0;
  for (Var s : scalars) {
    if (Val(g, s).size() != 1) throw DimensionError("sum expects one-element tensors");
    total += Val(g, s)[0];
  }
  auto parts = std::make_shared<std::vector<Var>>(scalars.begin(), scalars.end());
  return g.Emit(Tensor({1}, {total}), scalars, [parts](Graph& gr, Var self) {
    double gs = gr.grad(self)[0];
    for (Var s : *parts) {
      if (gr.requires_grad(s)) gr.grad(s)[0] += gs;
    }
  }, "sum");
}

}  // namespace ops
}  // namespace mobfed
