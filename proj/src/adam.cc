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

#include "mobfed/adam.h"

#include <cmath>

#include "mobfed/errors.h"

namespace mobfed {

void AdamStep(Parameter& p, AdamState& s) {
  if (!p.trainable) throw ContractError("adam_step on frozen parameter '" + p.name + "'");
  if (!s.m.SameShape(p.value) || !s.v.SameShape(p.value) || !p.grad.SameShape(p.value)) {
    throw DimensionError("adam state shape does not match parameter '" + p.name + "'");
  }
  s.step += 1;
  double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  double* w = p.value.data();
  double* g = p.grad.data();
  double* m = s.m.data();
  double* v = s.v.data();
  for (std::size_t i = 0, n = p.value.size(); i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    w[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    g[i] = 0.0;
  }
  CheckFinite(p.value, "adam_step");
}

Adam::Adam(ParamList params, const AdamOptions& opts) : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (Parameter* p : params_) states_.emplace_back(p->value.shape(), opts);
}

void Adam::Step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i]->trainable) AdamStep(*params_[i], states_[i]);
  }
}

void Adam::ZeroGrad() { ZeroGrads(params_); }

}  // namespace mobfed
