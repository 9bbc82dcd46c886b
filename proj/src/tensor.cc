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

#include "mobfed/tensor.h"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>

#include "mobfed/errors.h"

namespace mobfed {

namespace memstats {
namespace {
std::atomic<std::size_t> g_current{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

std::size_t CurrentBytes() { return g_current.load(); }
std::size_t PeakBytes() { return g_peak.load(); }
void ResetPeak() { g_peak.store(g_current.load()); }

void OnAllocate(std::size_t bytes) {
  std::size_t now = g_current.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

void OnDeallocate(std::size_t bytes) { g_current.fetch_sub(bytes); }
}  // namespace memstats

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (std::size_t s : shape_) {
    if (s == 0) throw DimensionError("tensor dimensions must be positive: " + ShapeString(shape_));
  }
  data_.assign(NumElements(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : Tensor(std::move(shape)) {
  if (values.size() != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + ShapeString(shape_));
  }
  std::copy(values.begin(), values.end(), data_.begin());
}

Tensor Tensor::Vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> flat;
  flat.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(flat));
}

std::size_t Tensor::rows() const { return shape_.empty() ? 1 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  return data_.size() / shape_[0];
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + ShapeString(shape_) + " to " + ShapeString(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::BitEqual(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

void CheckFinite(const Tensor& t, const char* op) {
  if (!t.AllFinite()) throw NumericError(std::string("non-finite value in ") + op);
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects matrices");
  if (a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul inner dimensions differ: " + ShapeString(a.shape()) + " x " +
                         ShapeString(b.shape()));
  }
  std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor c({m, n});
  Eigen::Map<const RowMat> A(a.data(), m, k);
  Eigen::Map<const RowMat> B(b.data(), k, n);
  Eigen::Map<RowMat> C(c.data(), m, n);
  C.noalias() = A * B;
  return c;
}

namespace {

void SoftmaxStrided(const double* in, double* out, std::size_t n, std::size_t stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, in[i * stride]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double e = std::exp(in[i * stride] - mx);
    out[i * stride] = e;
    sum += e;
  }
  for (std::size_t i = 0; i < n; ++i) out[i * stride] /= sum;
}

}  // namespace

Tensor Softmax(const Tensor& x, int axis) {
  for (double v : x.span()) {
    if (std::isnan(v)) throw NumericError("softmax input contains NaN");
  }
  int rank = static_cast<int>(x.rank());
  if (axis < 0) axis += rank;
  if (rank < 1 || rank > 2 || axis < 0 || axis >= rank) {
    throw DimensionError("softmax axis " + std::to_string(axis) + " invalid for shape " +
                         ShapeString(x.shape()));
  }
  Tensor out(x.shape());
  if (rank == 1) {
    SoftmaxStrided(x.data(), out.data(), x.size(), 1);
  } else if (axis == 1) {
    std::size_t r = x.shape()[0], c = x.shape()[1];
    for (std::size_t i = 0; i < r; ++i) SoftmaxStrided(x.data() + i * c, out.data() + i * c, c, 1);
  } else {
    std::size_t r = x.shape()[0], c = x.shape()[1];
    for (std::size_t j = 0; j < c; ++j) SoftmaxStrided(x.data() + j, out.data() + j, r, c);
  }
  return out;
}

double Gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double GeluGrad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  double pdf = std::exp(-0.5 * x * x) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
  return cdf + x * pdf;
}

double CrossEntropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw DimensionError("cross_entropy target " + std::to_string(target) + " out of range " +
                         std::to_string(logits.size()));
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (std::isnan(v)) throw NumericError("cross_entropy logits contain NaN");
    mx = std::max(mx, v);
  }
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) + mx - logits[target];
}

double MseSeqLoss(const Tensor& h, const Tensor& target) {
  if (!h.SameShape(target)) {
    throw DimensionError("mse_seq_loss shapes differ: " + ShapeString(h.shape()) + " vs " +
                         ShapeString(target.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    double diff = h[i] - target[i];
    total += diff * diff;
  }
  return total;
}

Tensor Outer(std::span<const double> a, std::span<const double> b) {
  Tensor out({a.size(), b.size()});
  for (std::size_t i = 0; i < a.size(); ++i) {
    double* row = out.data() + i * b.size();
    for (std::size_t j = 0; j < b.size(); ++j) row[j] = a[i] * b[j];
  }
  return out;
}

}  // namespace mobfed
