#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "cardioclr/errors.hpp"
#include "cardioclr/params.hpp"
#include "cardioclr/tensor.hpp"

namespace cardioclr {

struct AdamOptions {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;

  AdamState() = default;
  AdamState(const ParameterSet<T>& params, AdamOptions opts)
      : options(opts), first_moment(params.zeros_like()), second_moment(params.zeros_like()) {}
};

// One Adam update with decoupled weight decay:
//   theta <- theta - lr*wd*theta, then theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
void adam_step(ParameterSet<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ConfigError("adam_step: parameter/gradient/state counts disagree");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || state.first_moment[i].shape() != params[i].shape() ||
        state.second_moment[i].shape() != params[i].shape()) {
      throw ConfigError("adam_step: shape mismatch for parameter '" + params.name(i) + "'");
    }
  }
  const auto& o = state.options;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const T lr = static_cast<T>(o.learning_rate);
  const T decay = static_cast<T>(o.learning_rate * o.weight_decay);
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T eps = static_cast<T>(o.epsilon);
  const T c1 = static_cast<T>(bc1), c2 = static_cast<T>(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      p[j] -= decay * p[j];
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const T m_hat = m[j] / c1;
      const T v_hat = v[j] / c2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace cardioclr
