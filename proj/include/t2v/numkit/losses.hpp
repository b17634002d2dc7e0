#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "t2v/numkit/error.hpp"
#include "t2v/numkit/tensor.hpp"

namespace t2v {

// max(0, cos(a, b)); zero when either vector has norm below 1e-12.
template <typename T>
T cos_clamped(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("cos_clamped: dimension mismatch");
  const T na = l2_norm(a), nb = l2_norm(b);
  if (na < T(1e-12) || nb < T(1e-12)) return T{0};
  return std::max(T{0}, dot(a, b) / (na * nb));
}

inline double log_sum_exp(std::span<const double> xs, double shift) {
  double z = 0;
  for (double x : xs) z += std::exp(x - shift);
  return std::log(z) + shift;
}

// −log(Σ_pos e^x / (Σ_pos e^x + Σ_neg e^x)), max-shifted.
inline double mil_nce_loss(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty()) throw ValidationError("mil_nce_loss: no positive logits");
  // lse(all) - lse(pos) = softplus(lse(neg) - lse(pos)); each side keeps its
  // own max so a positive set far below the negatives stays finite.
  auto lse = [](std::span<const double> xs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    if (std::isinf(mx)) return mx;
    double z = 0;
    for (double x : xs) z += std::exp(x - mx);
    return mx + std::log(z);
  };
  const double d = lse(neg) - lse(pos);
  if (std::isinf(d) && d < 0) return 0.0;
  return std::max(d, 0.0) + std::log1p(std::exp(-std::abs(d)));
}

inline double mil_nce_loss(const std::vector<double>& pos, const std::vector<double>& neg) {
  return mil_nce_loss(std::span<const double>(pos), std::span<const double>(neg));
}

// s is clips×texts with matched pairs on the diagonal.
template <typename T>
T vse_loss(const BasicTensor<T>& s) {
  const std::size_t n = s.rows();
  if (s.cols() != n) throw ValidationError("vse_loss: similarity matrix must be square");
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) total += std::max(T{0}, s(j, i) - s(i, i));
    }
  }
  return total;
}

template <typename T>
T vsepp_loss(const BasicTensor<T>& s) {
  const std::size_t n = s.rows();
  if (s.cols() != n) throw ValidationError("vsepp_loss: similarity matrix must be square");
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    T worst{0};
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) worst = std::max(worst, s(j, i) - s(i, i));
    }
    total += worst;
  }
  return total;
}

template <typename T>
void softmax_into(std::span<const T> logits, std::span<T> out) {
  const T mx = *std::max_element(logits.begin(), logits.end());
  T z{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (auto& p : out) p /= z;
}

}  // namespace t2v
