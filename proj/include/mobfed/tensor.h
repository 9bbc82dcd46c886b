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

#ifndef MOBFED_TENSOR_H_
#define MOBFED_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace mobfed {

// Byte counters for tensor storage. Peak is a high-water mark since the last
// ResetPeak().
namespace memstats {
std::size_t CurrentBytes();
std::size_t PeakBytes();
void ResetPeak();
void OnAllocate(std::size_t bytes);
void OnDeallocate(std::size_t bytes);
}  // namespace memstats

template <typename T>
struct TrackingAllocator {
  using value_type = T;
  TrackingAllocator() = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) {}
  // Fixed 64-byte alignment: SIMD kernels then take the same code path (and
  // round the same way) on every run.
  static constexpr std::align_val_t kAlign{64};
  T* allocate(std::size_t n) {
    memstats::OnAllocate(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t n) {
    memstats::OnDeallocate(n * sizeof(T));
    ::operator delete(p, kAlign);
  }
  template <typename U>
  bool operator==(const TrackingAllocator<U>&) const {
    return true;
  }
};

using Shape = std::vector<std::size_t>;

// Dense row-major tensor of doubles.
class Tensor {
 public:
  using Storage = std::vector<double, TrackingAllocator<double>>;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor Vector(std::initializer_list<double> values);
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  // Leading dimension; 1 for scalars.
  std::size_t rows() const;
  // Product of trailing dimensions; 1 for vectors.
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return {data_.data(), data_.size()}; }
  std::span<const double> span() const { return {data_.data(), data_.size()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void Fill(double v);
  // Same data, new shape with equal element count.
  Tensor Reshaped(Shape shape) const;
  bool AllFinite() const;
  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }
  // Bitwise equality of shape and contents.
  bool BitEqual(const Tensor& other) const;

 private:
  Shape shape_;
  Storage data_;
};

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Throws NumericError naming `op` if any entry is NaN/Inf.
void CheckFinite(const Tensor& t, const char* op);

// Plain (non-differentiable) math used by the graph ops and by callers that do
// not need gradients.
Tensor MatMul(const Tensor& a, const Tensor& b);
// Softmax along `axis` (0 or 1 for matrices; 0 for vectors). Max-subtracted.
Tensor Softmax(const Tensor& x, int axis = -1);
double Gelu(double x);
double GeluGrad(double x);
// -log softmax(logits)[target], log-sum-exp form. logits is a vector.
double CrossEntropy(std::span<const double> logits, std::size_t target);
// Sum over rows of squared Euclidean distance.
double MseSeqLoss(const Tensor& h, const Tensor& target);
// Row-major outer product a ⊗ b.
Tensor Outer(std::span<const double> a, std::span<const double> b);

}  // namespace mobfed

#endif  // MOBFED_TENSOR_H_
