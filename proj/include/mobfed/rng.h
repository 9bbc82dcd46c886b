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

#ifndef MOBFED_RNG_H_
#define MOBFED_RNG_H_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace mobfed {

// Name of the Gaussian sampler, recorded in run manifests.
inline constexpr std::string_view kGaussianSampler = "box-muller/mt19937_64";

// Seeded random source. All draws are built from raw 64-bit mt19937_64 output
// with explicit conversions, so sequences do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double Uniform();
  // Uniform in [lo, hi).
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n), unbiased (rejection sampling). n > 0.
  std::uint64_t UniformInt(std::uint64_t n);
  // Standard normal via the Box–Muller transform; pairs are cached.
  double Normal();
  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }
  // Index drawn proportionally to non-negative weights.
  std::size_t Categorical(std::span<const double> weights);

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(UniformInt(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer.
std::uint64_t Mix64(std::uint64_t x);
// 64-bit FNV-1a over bytes.
std::uint64_t Fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
// Order-sensitive combination of seed components.
std::uint64_t DeriveSeed(std::uint64_t a, std::uint64_t b);
std::uint64_t DeriveSeed(std::uint64_t a, std::uint64_t b, std::uint64_t c);
// Per-client, per-round stream: hash(global_seed, client_id, round).
std::uint64_t ClientRoundSeed(std::uint64_t global_seed, std::string_view client_id, std::uint32_t round);

}  // namespace mobfed

#endif  // MOBFED_RNG_H_
