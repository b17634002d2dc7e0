#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "t2v/numkit/error.hpp"

namespace t2v {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

// Dense row-major tensor. Rank-1 tensors behave as 1×n rows and rank-2 tensors
// as matrices wherever a 2-D view is needed.
template <typename T>
struct BasicTensor {
  Shape shape;
  std::vector<T> data;

  BasicTensor() = default;
  explicit BasicTensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(shape_size(shape), fill) {}
  BasicTensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_size(shape) != data.size()) {
      throw ValidationError("tensor shape " + shape_str(shape) + " does not match " +
                            std::to_string(data.size()) + " values");
    }
  }

  static BasicTensor vector(std::vector<T> values) {
    Shape s{values.size()};
    return BasicTensor(std::move(s), std::move(values));
  }
  static BasicTensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    return BasicTensor(Shape{rows, cols}, std::move(values));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  std::size_t cols() const {
    if (shape.empty()) return 1;
    return shape.size() == 1 ? shape[0] : data.size() / shape[0];
  }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  std::span<T> row(std::size_t r) { return std::span<T>(data).subspan(r * cols(), cols()); }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data).subspan(r * cols(), cols());
  }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Named tensors in insertion order.
template <typename T>
class BasicParamSet {
 public:
  using Entry = std::pair<std::string, BasicTensor<T>>;

  int version = 1;

  void add(std::string name, BasicTensor<T> tensor) {
    if (contains(name)) throw ValidationError("duplicate parameter name '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(tensor));
  }

  void set(const std::string& name, BasicTensor<T> tensor) {
    if (auto* t = find(name)) {
      *t = std::move(tensor);
    } else {
      entries_.emplace_back(name, std::move(tensor));
    }
  }

  bool contains(const std::string& name) const { return find(name) != nullptr; }

  BasicTensor<T>* find(const std::string& name) {
    for (auto& [n, t] : entries_) {
      if (n == name) return &t;
    }
    return nullptr;
  }
  const BasicTensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
      if (n == name) return &t;
    }
    return nullptr;
  }

  const BasicTensor<T>& at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw ValidationError("missing parameter '" + name + "'");
  }
  BasicTensor<T>& at(const std::string& name) {
    if (auto* t = find(name)) return *t;
    throw ValidationError("missing parameter '" + name + "'");
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  template <typename U>
  BasicParamSet<U> cast() const {
    BasicParamSet<U> out;
    out.version = version;
    for (const auto& [n, t] : entries_) out.add(n, t.template cast<U>());
    return out;
  }

  // Throws if any of `names` is absent, listing all of the missing ones.
  void require(const std::vector<std::string>& names) const;

  friend bool operator==(const BasicParamSet&, const BasicParamSet&) = default;

 private:
  std::vector<Entry> entries_;
};

template <typename T>
void BasicParamSet<T>::require(const std::vector<std::string>& names) const {
  std::string missing;
  for (const auto& n : names) {
    if (!contains(n)) missing += (missing.empty() ? "" : ", ") + n;
  }
  if (!missing.empty()) throw ValidationError("missing tensors: " + missing);
}

using ParamSet = BasicParamSet<float>;
using ParamSet64 = BasicParamSet<double>;

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T s{0};
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
T l2_norm(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

}  // namespace t2v
