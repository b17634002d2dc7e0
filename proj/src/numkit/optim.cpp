#include "t2v/numkit/optim.hpp"

#include <algorithm>
#include <cmath>

namespace t2v {

double lr_at(const LrSchedule& schedule, std::int64_t step) {
  if (schedule.steps_per_epoch <= 0) throw ConfigError("lr schedule: steps_per_epoch must be positive");
  if (step < 0) throw ValidationError("lr schedule: negative step");
  if (schedule.warmup_steps > 0 && step < schedule.warmup_steps) {
    return schedule.base_lr * static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
  }
  const std::int64_t epoch = step / schedule.steps_per_epoch;
  double lr = schedule.base_lr;
  for (std::int64_t e : schedule.decay_epochs) {
    if (epoch >= e) lr *= schedule.decay_factor;
  }
  return lr;
}

template <typename T>
BasicParamSet<T> sgd_step(const BasicParamSet<T>& params, const BasicParamSet<T>& grads, double lr) {
  BasicParamSet<T> out = params;
  for (const auto& [name, g] : grads) {
    auto* p = out.find(name);
    if (p == nullptr) throw ValidationError("sgd_step: gradient for unknown parameter '" + name + "'");
    if (p->shape != g.shape) {
      throw ValidationError("sgd_step: shape mismatch for '" + name + "': " + shape_str(p->shape) + " vs " +
                            shape_str(g.shape));
    }
    const T step = static_cast<T>(lr);
    for (std::size_t i = 0; i < p->data.size(); ++i) p->data[i] -= step * g.data[i];
  }
  return out;
}

template <typename T>
BasicParamSet<T> finite_diff_grad(const ScalarFn<T>& f, const BasicParamSet<T>& params, T eps) {
  if (!(eps > T{0})) throw ValidationError("finite_diff_grad: eps must be positive");
  BasicParamSet<T> work = params;
  BasicParamSet<T> out;
  out.version = params.version;
  for (auto& [name, tensor] : work) {
    BasicTensor<T> g(tensor.shape, T{0});
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      const T orig = tensor.data[i];
      tensor.data[i] = orig + eps;
      const T up = f(work);
      tensor.data[i] = orig - eps;
      const T down = f(work);
      tensor.data[i] = orig;
      g.data[i] = (up - down) / (T{2} * eps);
    }
    out.add(name, std::move(g));
  }
  return out;
}

double max_relative_error(const ParamSet64& a, const ParamSet64& b, double floor) {
  double worst = 0;
  for (const auto& [name, ta] : a) {
    const auto& tb = b.at(name);
    if (ta.shape != tb.shape) throw ValidationError("max_relative_error: shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < ta.data.size(); ++i) {
      const double x = ta.data[i], y = tb.data[i];
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

template BasicParamSet<float> sgd_step(const BasicParamSet<float>&, const BasicParamSet<float>&, double);
template BasicParamSet<double> sgd_step(const BasicParamSet<double>&, const BasicParamSet<double>&, double);
template BasicParamSet<float> finite_diff_grad(const ScalarFn<float>&, const BasicParamSet<float>&, float);
template BasicParamSet<double> finite_diff_grad(const ScalarFn<double>&, const BasicParamSet<double>&, double);

}  // namespace t2v
