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

// Straight-line loop implementations used as test oracles. Deliberately
// naive: no Eigen, no shared code with the library kernels.

#ifndef MOBFED_TESTS_REFERENCE_H_
#define MOBFED_TESTS_REFERENCE_H_

#include <cmath>
#include <limits>
#include <vector>

#include "mobfed/nn.h"

namespace mobfed::testref {

inline Tensor MatMul(const Tensor& a, const Tensor& b) {
  std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a.at(i, t) * b.at(t, j);
      out.at(i, j) = s;
    }
  }
  return out;
}

// y = x Wᵀ + b, W is [out×in].
inline Tensor Linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  std::size_t n = x.shape()[0], in = x.shape()[1], out = w.shape()[0];
  Tensor y({n, out});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b.empty() ? 0.0 : b[o];
      for (std::size_t t = 0; t < in; ++t) s += x.at(i, t) * w.at(o, t);
      y.at(i, o) = s;
    }
  }
  return y;
}

inline Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  std::size_t n = x.shape()[0], h = x.shape()[1];
  Tensor y({n, h});
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t c = 0; c < h; ++c) mu += x.at(i, c);
    mu /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t c = 0; c < h; ++c) var += (x.at(i, c) - mu) * (x.at(i, c) - mu);
    var /= static_cast<double>(h);
    for (std::size_t c = 0; c < h; ++c) y.at(i, c) = gamma[c] * (x.at(i, c) - mu) / std::sqrt(var + eps) + beta[c];
  }
  return y;
}

inline Tensor Gelu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.span()) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return y;
}

inline Tensor Add(const Tensor& a, const Tensor& b) {
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

// One causal sequence; heads take contiguous column slices.
inline Tensor Attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  std::size_t n = q.shape()[0], h = q.shape()[1], dh = h / heads;
  Tensor out({n, h});
  for (std::size_t hd = 0; hd < heads; ++hd) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(i + 1);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q.at(i, hd * dh + c) * k.at(j, hd * dh + c);
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& e : s) {
        e = std::exp(e - mx);
        z += e;
      }
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += s[j] / z * v.at(j, hd * dh + c);
        out.at(i, hd * dh + c) = acc;
      }
    }
  }
  return out;
}

inline Tensor BlockForward(const TransformerBlock& b, const Tensor& x) {
  Tensor a = LayerNorm(x, b.ln1.gamma.value, b.ln1.beta.value);
  Tensor q = Linear(a, b.wq.weight.value, b.wq.bias.value);
  Tensor k = Linear(a, b.wk.weight.value, b.wk.bias.value);
  Tensor v = Linear(a, b.wv.weight.value, b.wv.bias.value);
  Tensor att = Attention(q, k, v, b.config().heads);
  Tensor x1 = Add(x, Linear(att, b.wo.weight.value, b.wo.bias.value));
  Tensor f = Gelu(Linear(LayerNorm(x1, b.ln2.gamma.value, b.ln2.beta.value), b.fc1.weight.value, b.fc1.bias.value));
  return Add(x1, Linear(f, b.fc2.weight.value, b.fc2.bias.value));
}

}  // namespace mobfed::testref

#endif  // MOBFED_TESTS_REFERENCE_H_
