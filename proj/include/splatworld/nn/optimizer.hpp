#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>

#include "splatworld/common.hpp"

namespace splatworld {

enum class OptAlgo { sgd, adam, lamb };

inline const char* opt_algo_name(OptAlgo a) {
  switch (a) {
    case OptAlgo::sgd: return "sgd";
    case OptAlgo::adam: return "adam";
    case OptAlgo::lamb: return "lamb";
  }
  return "?";
}

inline OptAlgo opt_algo_from_name(const std::string& s) {
  if (s == "sgd") return OptAlgo::sgd;
  if (s == "adam") return OptAlgo::adam;
  if (s == "lamb") return OptAlgo::lamb;
  throw InvalidParameterError("unknown optimizer tag: " + s);
}

// Per-parameter-tensor optimizer state. Parameters are addressed by name;
// LAMB's trust ratio is computed per named tensor.
template <class S> struct OptimizerState {
  OptAlgo algorithm = OptAlgo::lamb;
  long step_count = 0;
  S learning_rate = S(0.0005);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S weight_decay = S(0);
  S epsilon = S(1e-8);
  S trust_clamp = S(10);  // upper bound on the LAMB trust ratio

  struct Moments {
    VecX<S> m, v;
  };
  std::map<std::string, Moments> moments;

  void begin_step() { ++step_count; }
};

// One update for one named tensor. `lr_scale` multiplies the global learning
// rate (used for per-group rates and schedules). Non-finite gradients skip
// the update and return the offending parameter name instead of throwing, so
// a training loop can log and continue.
template <class S>
std::optional<std::string> optimizer_step(OptimizerState<S>& state, const std::string& name,
                                          Eigen::Ref<VecX<S>> params, const VecX<S>& grads,
                                          S lr_scale = S(1)) {
  if (params.size() != grads.size())
    throw ShapeError("optimizer_step: parameter/gradient size mismatch for " + name);
  if (!grads.allFinite()) return "non-finite gradient for parameter '" + name + "'";
  const S lr = state.learning_rate * lr_scale;

  if (state.algorithm == OptAlgo::sgd) {
    if (state.weight_decay != S(0)) params -= lr * state.weight_decay * params;
    params -= lr * grads;
    return std::nullopt;
  }

  auto& mom = state.moments[name];
  if (mom.m.size() != params.size()) {
    mom.m = VecX<S>::Zero(params.size());
    mom.v = VecX<S>::Zero(params.size());
  }
  const long t = std::max<long>(1, state.step_count);
  mom.m = state.beta1 * mom.m + (S(1) - state.beta1) * grads;
  mom.v = state.beta2 * mom.v + (S(1) - state.beta2) * grads.cwiseProduct(grads);
  const S c1 = S(1) - S(std::pow(double(state.beta1), double(t)));
  const S c2 = S(1) - S(std::pow(double(state.beta2), double(t)));
  VecX<S> update =
      (mom.m / c1).cwiseQuotient(((mom.v / c2).cwiseSqrt().array() + state.epsilon).matrix());
  update += state.weight_decay * params;

  if (state.algorithm == OptAlgo::adam) {
    params -= lr * update;
    return std::nullopt;
  }

  // LAMB: per-tensor trust ratio ||p|| / ||update||, clamped.
  const S pnorm = params.norm();
  const S unorm = update.norm();
  S ratio = (pnorm > S(0) && unorm > S(0)) ? pnorm / unorm : S(1);
  if (ratio > state.trust_clamp) ratio = state.trust_clamp;
  params -= lr * ratio * update;
  return std::nullopt;
}

}  // namespace splatworld
