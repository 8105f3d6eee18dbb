#include "sing/optim.hpp"

#include <cmath>

namespace sing::nn {

void rmsprop_step(ParamMap& params, const GradMap& grads,
                  RmsPropState& state) {
  for (const auto& [name, grad] : grads) {
    auto it = params.find(name);
    if (it == params.end())
      throw ShapeError("rmsprop_step: unknown parameter " + name);
    Tensor& theta = it->second;
    if (!theta.same_shape(grad))
      throw ShapeError("rmsprop_step: gradient shape mismatch for " + name);
    Tensor& v = state.v.try_emplace(name, Tensor(theta.ch, theta.len))
                    .first->second;
    if (!v.same_shape(theta))
      throw ShapeError("rmsprop_step: accumulator shape mismatch for " + name);
    for (std::size_t i = 0; i < theta.v.size(); ++i) {
      const double gi = grad.v[i];
      v.v[i] = state.rho * v.v[i] + (1.0 - state.rho) * gi * gi;
      theta.v[i] -= state.lr * gi / (std::sqrt(v.v[i]) + state.eps);
    }
  }
}

void clip_weights(ParamMap& params, double c) {
  clip_weights(params, c, [](const std::string&) { return true; });
}

void accumulate_grads(GradMap& into, const GradMap& add) {
  for (const auto& [name, g] : add) {
    auto [it, inserted] = into.try_emplace(name, g);
    if (inserted) continue;
    if (!it->second.same_shape(g))
      throw ShapeError("accumulate_grads: shape mismatch for " + name);
    for (std::size_t i = 0; i < g.v.size(); ++i) it->second.v[i] += g.v[i];
  }
}

}  // namespace sing::nn
