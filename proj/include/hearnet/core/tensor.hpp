// Copyright 2026 The HearNet Authors. All Rights Reserved.
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hearnet/core/error.hpp"

namespace hearnet {

using Shape = std::vector<size_t>;

inline size_t NumElements(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), size_t{1},
                         std::multiplies<size_t>());
}

inline std::string ShapeString(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Cache-line aligned storage. Vectorized kernels pick their code path from
// the buffer address, so a fixed alignment keeps results bit-reproducible
// across allocations.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Dense row-major array. Value type; copies are deep.
template <class T>
class Tensor {
 public:
  using Storage = AlignedVector<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}
  Tensor(Shape shape, const std::vector<T>& data)
      : Tensor(std::move(shape), Storage(data.begin(), data.end())) {}
  Tensor(Shape shape, std::initializer_list<T> data)
      : Tensor(std::move(shape), Storage(data.begin(), data.end())) {}
  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    Require(data_.size() == NumElements(shape_),
            "Tensor: data size does not match shape " + ShapeString(shape_));
  }

  static Tensor Zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor Ones(Shape s) { return Tensor(std::move(s), T{1}); }
  static Tensor Scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t dim(size_t i) const { return shape_.at(i); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  Storage& vec() { return data_; }
  const Storage& vec() const { return data_; }
  std::vector<T> ToVector() const { return std::vector<T>(data_.begin(), data_.end()); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  T& at(std::initializer_list<size_t> idx) { return data_[Offset(idx)]; }
  const T& at(std::initializer_list<size_t> idx) const {
    return data_[Offset(idx)];
  }

  Tensor Reshaped(Shape s) const {
    Require(NumElements(s) == size(), "Tensor::Reshaped: " +
                                          ShapeString(shape_) + " -> " +
                                          ShapeString(s));
    return Tensor(std::move(s), data_);
  }

  void Fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool AllFinite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Tensor<U> Cast() const {
    return Tensor<U>(shape_, typename Tensor<U>::Storage(data_.begin(), data_.end()));
  }

 private:
  size_t Offset(std::initializer_list<size_t> idx) const {
    Require(idx.size() == shape_.size(), "Tensor::at: rank mismatch");
    size_t off = 0, d = 0;
    for (size_t i : idx) {
      Require(i < shape_[d], "Tensor::at: index out of range");
      off = off * shape_[d++] + i;
    }
    return off;
  }

  Shape shape_;
  Storage data_;
};

template <class T>
T MaxAbsDiff(const Tensor<T>& a, const Tensor<T>& b) {
  Require(a.shape() == b.shape(), "MaxAbsDiff: shape mismatch");
  T m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace hearnet
