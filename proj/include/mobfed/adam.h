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

#ifndef MOBFED_ADAM_H_
#define MOBFED_ADAM_H_

#include <cstdint>
#include <vector>

#include "mobfed/nn.h"

namespace mobfed {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(const Shape& shape, const AdamOptions& opts)
      : m(shape), v(shape), lr(opts.lr), beta1(opts.beta1), beta2(opts.beta2), eps(opts.eps) {}

  Tensor m;
  Tensor v;
  std::uint64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of `p` from p.grad; zeroes p.grad afterwards.
// Throws ContractError if p is frozen.
void AdamStep(Parameter& p, AdamState& s);

// Adam over a fixed parameter list, one state per parameter.
class Adam {
 public:
  Adam(ParamList params, const AdamOptions& opts = {});

  // Steps every trainable parameter; frozen ones are skipped untouched.
  void Step();
  void ZeroGrad();
  const ParamList& params() const { return params_; }
  const std::vector<AdamState>& states() const { return states_; }

 private:
  ParamList params_;
  std::vector<AdamState> states_;
};

}  // namespace mobfed

#endif  // MOBFED_ADAM_H_
