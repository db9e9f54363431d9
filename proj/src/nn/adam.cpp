#include "marl/nn/adam.hpp"

#include <cmath>

namespace marl::nn {

void adam_step(VectorXd& params, const VectorXd& grads, AdamState& state, const AdamHyper& hyper) {
  if (params.size() != grads.size() || state.first.size() != params.size() ||
      state.second.size() != params.size()) {
    throw Error("shape_mismatch", "adam_step: parameter, gradient and moment lengths differ");
  }
  if (!grads.allFinite() || !params.allFinite()) throw Error("non_finite", "adam_step: non-finite input");

  ++state.step;
  const double t = static_cast<double>(state.step);
  state.first = hyper.beta1 * state.first + (1.0 - hyper.beta1) * grads;
  state.second = hyper.beta2 * state.second + (1.0 - hyper.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  params.array() -= hyper.learning_rate * (state.first.array() / c1) /
                    ((state.second.array() / c2).sqrt() + hyper.epsilon);
}

}  // namespace marl::nn
