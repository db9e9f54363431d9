#pragma once

#include "marl/common.hpp"

#include <vector>

namespace marl {

/// Coefficient of determination 1 - SS_res / SS_tot against the target mean.
/// Throws "length_mismatch", "too_few" (< 2 entries) or "degenerate_targets".
double r2(const std::vector<double>& preds, const std::vector<double>& targets);

/// Fraction of equal entries. Throws "length_mismatch" or "too_few" (empty).
double accuracy(const std::vector<int>& preds, const std::vector<int>& targets);

/// counts(true, predicted). Throws "invalid_label" for indices outside [0, k).
Eigen::MatrixXi confusion(const std::vector<int>& preds, const std::vector<int>& targets, Index classes);

/// Index of the largest entry, first on ties.
int argmax(const VectorXd& v);

}  // namespace marl
