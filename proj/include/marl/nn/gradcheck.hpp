#pragma once

#include "marl/nn/model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace marl::nn {

/// |a - n| / max(|a|, |n|, floor). Central differences at eps = 1e-5 carry
/// about 1e-11 of rounding error, so entries far below the floor cannot be
/// resolved to a meaningful relative precision.
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index worst_index = -1;
  std::string worst_block;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  Index checked = 0;
  // Coordinates whose +/- eps probes land on different sides of a ReLU or
  // max-pool switch; the loss is not differentiable across them.
  Index skipped_kinks = 0;
};

/// Throws "non_finite_gradient" naming the owning block if any entry of
/// `grad` is NaN or infinite.
void check_finite(const ParamLayout& layout, const VectorXd& grad);

/// Hash of every piecewise-linear branch taken (ReLU signs, max-pool winners)
/// in a forward pass. Equal hashes on both probes mean the central difference
/// stays on one smooth piece.
std::uint64_t branch_signature(const ForwardTrace& trace);

/// Compares the analytic gradient of model.loss(batch) with central
/// differences over every parameter.
GradCheckReport grad_check(Model& model, const std::vector<const Sample*>& batch, double eps = 1e-5);

/// Generic check for f: R^n -> R with analytic gradient g, used for the
/// standalone ops. No kink detection.
GradCheckReport grad_check_function(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                                    const VectorXd& analytic, double eps = 1e-5);

}  // namespace marl::nn

namespace marl::nn {

/// Small model plus random inputs for whole-model gradient checks: 8x8 images,
/// three timesteps with the first one padded, LSTM width 4.
struct GradCheckFixture {
  Model model;
  std::vector<Sample> samples;

  std::vector<const Sample*> batch() const;
};

GradCheckFixture make_gradcheck_fixture(Variant variant, Task task, std::uint64_t seed = 11);

}  // namespace marl::nn
