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

#ifndef MOBFED_GRADCHECK_H_
#define MOBFED_GRADCHECK_H_

#include <cstdint>
#include <functional>

#include "mobfed/nn.h"

namespace mobfed {

// Builds a scalar loss on a fresh graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates sampled per parameter; parameters at or below this size are
  // checked exhaustively.
  std::size_t coords_per_param = 24;
  std::uint64_t seed = 0;
};

// Compares reverse-mode gradients against central differences and returns the
// max over sampled coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
// Only trainable parameters are checked. Parameter values are restored.
double FiniteDifferenceCheck(const LossBuilder& loss, const ParamList& params, const GradCheckOptions& opts = {});

}  // namespace mobfed

#endif  // MOBFED_GRADCHECK_H_
