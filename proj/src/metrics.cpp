#include "marl/metrics.hpp"

#include <string>

namespace marl {

namespace {

void check_lengths(std::size_t a, std::size_t b, std::size_t minimum) {
  if (a != b) throw Error("length_mismatch", std::to_string(a) + " predictions for " + std::to_string(b) + " targets");
  if (a < minimum) throw Error("too_few", "need at least " + std::to_string(minimum) + " entries");
}

}  // namespace

double r2(const std::vector<double>& preds, const std::vector<double>& targets) {
  check_lengths(preds.size(), targets.size(), 2);
  const auto n = static_cast<Index>(targets.size());
  const Eigen::Map<const VectorXd> y(targets.data(), n), p(preds.data(), n);
  const double ss_tot = (y.array() - y.mean()).square().sum();
  if (!(ss_tot > 0.0)) throw Error("degenerate_targets", "targets are all equal");
  return 1.0 - (y - p).squaredNorm() / ss_tot;
}

double accuracy(const std::vector<int>& preds, const std::vector<int>& targets) {
  check_lengths(preds.size(), targets.size(), 1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

Eigen::MatrixXi confusion(const std::vector<int>& preds, const std::vector<int>& targets, Index classes) {
  if (preds.size() != targets.size()) throw Error("length_mismatch", "predictions and targets differ in length");
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(classes, classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= classes || targets[i] < 0 || targets[i] >= classes) {
      throw Error("invalid_label", "class index outside [0, " + std::to_string(classes) + ")");
    }
    ++counts(targets[i], preds[i]);
  }
  return counts;
}

int argmax(const VectorXd& v) {
  Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace marl
