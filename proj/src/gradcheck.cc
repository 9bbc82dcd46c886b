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

#include "mobfed/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mobfed/errors.h"

namespace mobfed {
namespace {

double Evaluate(const LossBuilder& loss) {
  Graph g;
  Var l = loss(g);
  double v = g.value(l)[0];
  if (!std::isfinite(v)) throw NumericError("finite_difference_check: loss is not finite");
  return v;
}

}  // namespace

double FiniteDifferenceCheck(const LossBuilder& loss, const ParamList& params, const GradCheckOptions& opts) {
  ZeroGrads(params);
  {
    Graph g;
    Var l = loss(g);
    if (!std::isfinite(g.value(l)[0])) throw NumericError("finite_difference_check: loss is not finite");
    g.Backward(l);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad);
  ZeroGrads(params);

  Rng rng(opts.seed);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    if (!p.trainable) continue;
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > opts.coords_per_param) {
      rng.Shuffle(coords);
      coords.resize(opts.coords_per_param);
    }
    for (std::size_t c : coords) {
      double saved = p.value[c];
      auto at = [&](double offset) {
        p.value[c] = saved + offset;
        return Evaluate(loss);
      };
      const double h = opts.step;
      // Five-point stencil, truncation O(h^4).
      double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      p.value[c] = saved;
      double a = analytic[pi][c];
      double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace mobfed
