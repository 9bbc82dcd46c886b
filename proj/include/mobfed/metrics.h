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

#ifndef MOBFED_METRICS_H_
#define MOBFED_METRICS_H_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace mobfed::eval {

inline constexpr std::size_t kMaxRank = 20;

struct RankedPrediction {
  std::vector<std::size_t> ranked;  // best first, distinct
  std::size_t truth = 0;

  // 1-based position of the truth, or nothing when it is past the list.
  std::optional<std::size_t> Rank() const;
};

// Fraction of queries whose truth is in the top k. Throws ConfigError for
// k < 1 and ContractError for an empty list.
double AccAtK(std::span<const RankedPrediction> preds, std::size_t k);
// Mean reciprocal rank; a truth missing from the list contributes 0.
double Mrr(std::span<const RankedPrediction> preds);

// Values are fractions in [0, 1].
struct MetricsReport {
  double acc1 = 0.0;
  double acc5 = 0.0;
  double acc20 = 0.0;
  double mrr = 0.0;
  std::size_t m = 0;

  nlohmann::json ToJson() const;
};

MetricsReport Summarize(std::span<const RankedPrediction> preds);

}  // namespace mobfed::eval

#endif  // MOBFED_METRICS_H_
