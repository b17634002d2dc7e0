#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "t2v/numkit/tensor.hpp"

namespace t2v {

struct LrSchedule {
  double base_lr = 0.001;
  std::int64_t warmup_steps = 1000;
  std::vector<std::int64_t> decay_epochs{40, 80};
  double decay_factor = 0.1;
  std::int64_t steps_per_epoch = 1;
};

// Linear ramp from 0 over the warmup, then step decay by epoch.
double lr_at(const LrSchedule& schedule, std::int64_t step);

// p - lr·g for every parameter that has a gradient.
template <typename T>
BasicParamSet<T> sgd_step(const BasicParamSet<T>& params, const BasicParamSet<T>& grads, double lr);

template <typename T>
using ScalarFn = std::function<T(const BasicParamSet<T>&)>;

// Central differences, one coordinate at a time.
template <typename T>
BasicParamSet<T> finite_diff_grad(const ScalarFn<T>& f, const BasicParamSet<T>& params, T eps);

// max over coordinates of |a − b| / max(|a|, |b|, floor).
double max_relative_error(const ParamSet64& a, const ParamSet64& b, double floor = 1e-6);

}  // namespace t2v
