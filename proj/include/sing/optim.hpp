#pragma once

#include <map>
#include <string>

#include "sing/tensor.hpp"

namespace sing::nn {

using ParamMap = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

// RMSProp with per-entry accumulators:
//   v <- rho*v + (1-rho)*g^2
//   theta <- theta - lr * g / (sqrt(v) + eps)
struct RmsPropState {
  double lr = 5e-5;
  double rho = 0.9;
  double eps = 1e-8;
  ParamMap v;  // accumulators, keyed like the params
};

// Applies one update for every entry present in grads. Missing accumulators
// are zero-initialized; shape mismatches throw.
void rmsprop_step(ParamMap& params, const GradMap& grads, RmsPropState& state);

// Clamp every entry of every tensor to [-c, c]. The predicate-taking
// overload restricts clipping to matching parameter names.
void clip_weights(ParamMap& params, double c);

template <typename Pred>
void clip_weights(ParamMap& params, double c, Pred&& pred) {
  if (c <= 0) throw ValidationError("clip_weights: c must be positive");
  for (auto& [name, t] : params) {
    if (!pred(name)) continue;
    for (double& x : t.v) {
      if (x > c) x = c;
      if (x < -c) x = -c;
    }
  }
}

void accumulate_grads(GradMap& into, const GradMap& add);

}  // namespace sing::nn
