#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "t2v/numkit/tensor.hpp"

// Central differences written independently of numkit's finite_diff_grad so
// the two can check each other.
namespace t2v::oracle {

inline ParamSet64 central_diff(const std::function<double(const ParamSet64&)>& f, ParamSet64 params,
                               double eps = 1e-6) {
  ParamSet64 grads;
  for (const auto& [name, t] : params) grads.add(name, Tensor64(t.shape));
  for (auto& [name, t] : params) {
    auto& gt = grads.at(name);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double keep = t.data[i];
      t.data[i] = keep + eps;
      const double up = f(params);
      t.data[i] = keep - eps;
      const double down = f(params);
      t.data[i] = keep;
      gt.data[i] = (up - down) / (2 * eps);
    }
  }
  return grads;
}

// |a − b| / max(|a|, |b|, floor), worst coordinate.
inline double worst_relative(const ParamSet64& a, const ParamSet64& b, double floor) {
  double worst = 0;
  for (const auto& [name, ta] : a) {
    const auto& tb = b.at(name);
    for (std::size_t i = 0; i < ta.data.size(); ++i) {
      const double x = ta.data[i], y = tb.data[i];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
    }
  }
  return worst;
}

}  // namespace t2v::oracle
