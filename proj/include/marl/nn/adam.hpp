#pragma once

#include "marl/common.hpp"

namespace marl::nn {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  VectorXd first;
  VectorXd second;
  long step = 0;

  static AdamState zeros(Index n) { return {VectorXd::Zero(n), VectorXd::Zero(n), 0}; }
};

/// Bias-corrected adaptive moment update, in place. Throws "non_finite" if a
/// gradient entry is NaN or infinite.
void adam_step(VectorXd& params, const VectorXd& grads, AdamState& state, const AdamHyper& hyper);

}  // namespace marl::nn
