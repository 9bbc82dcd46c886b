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

#include "mobfed/metrics.h"

#include <algorithm>

#include "mobfed/errors.h"

namespace mobfed::eval {

std::optional<std::size_t> RankedPrediction::Rank() const {
  auto it = std::find(ranked.begin(), ranked.end(), truth);
  if (it == ranked.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ranked.begin()) + 1;
}

double AccAtK(std::span<const RankedPrediction> preds, std::size_t k) {
  if (k < 1) throw ConfigError("acc@k needs k >= 1");
  if (preds.empty()) throw ContractError("acc@k over zero queries");
  std::size_t hits = 0;
  for (const auto& p : preds) {
    auto r = p.Rank();
    if (r && *r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double Mrr(std::span<const RankedPrediction> preds) {
  if (preds.empty()) throw ContractError("mrr over zero queries");
  double s = 0.0;
  for (const auto& p : preds) {
    if (auto r = p.Rank()) s += 1.0 / static_cast<double>(*r);
  }
  return s / static_cast<double>(preds.size());
}

nlohmann::json MetricsReport::ToJson() const {
  return {{"acc1", acc1}, {"acc5", acc5}, {"acc20", acc20}, {"mrr", mrr}, {"m", m}};
}

MetricsReport Summarize(std::span<const RankedPrediction> preds) {
  MetricsReport r;
  r.acc1 = AccAtK(preds, 1);
  r.acc5 = AccAtK(preds, 5);
  r.acc20 = AccAtK(preds, 20);
  r.mrr = Mrr(preds);
  r.m = preds.size();
  return r;
}

}  // namespace mobfed::eval
