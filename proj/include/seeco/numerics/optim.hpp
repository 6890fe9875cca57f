#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "seeco/numerics/autodiff.hpp"

namespace seeco {

struct AdamWConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moments for one parameter.
struct OptimizerState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
  AdamWConfig hp;
  bool initialized = false;

  static OptimizerState for_param(const TrainableParam& p, const AdamWConfig& hp) {
    return OptimizerState{Tensor(p.value().shape()), Tensor(p.value().shape()), 0, hp, true};
  }
};

/// Decoupled weight decay first, then the bias-corrected Adam step.
inline void adamw_step(OptimizerState& state, TrainableParam& param) {
  require(state.initialized, ErrorCode::kStateUninitialized, "optimizer state for '" + param.id() + "'");
  require(state.m.shape() == param.value().shape() && state.v.shape() == param.value().shape(),
          ErrorCode::kShapeMismatch, "optimizer state does not match '" + param.id() + "'");
  const AdamWConfig& hp = state.hp;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  const double decay = 1.0 - hp.learning_rate * hp.weight_decay;
  Tensor& value = param.value();
  const Tensor& grad = param.grad();
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    value[i] = value[i] * decay - hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

/// Optimizer over a named parameter set; moments are created on first use.
class AdamW {
 public:
  explicit AdamW(AdamWConfig hp) : hp_(hp) {}

  void step(TrainableParam& param) {
    auto it = states_.find(param.id());
    if (it == states_.end()) it = states_.emplace(param.id(), OptimizerState::for_param(param, hp_)).first;
    adamw_step(it->second, param);
  }

  const OptimizerState* state(const std::string& id) const {
    auto it = states_.find(id);
    return it == states_.end() ? nullptr : &it->second;
  }

  const AdamWConfig& config() const noexcept { return hp_; }

 private:
  AdamWConfig hp_;
  std::map<std::string, OptimizerState> states_;
};

}  // namespace seeco
