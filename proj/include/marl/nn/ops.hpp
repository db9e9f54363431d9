#pragma once

#include "marl/common.hpp"

#include <cmath>
#include <vector>

namespace marl::nn {

template <typename Derived>
auto logistic(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

/// Max-shifted softmax; the output sums to one.
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) throw Error("empty_input", "softmax of an empty vector");
  const Scalar shift = x.maxCoeff();
  Vector<Scalar> e = (x.array() - shift).exp().matrix();
  return e / e.sum();
}

/// Back-propagates through y = softmax(x): dx = y * (dy - <y, dy>).
template <typename DerivedY, typename DerivedG>
Vector<typename DerivedY::Scalar> softmax_backward(const Eigen::MatrixBase<DerivedY>& y,
                                                   const Eigen::MatrixBase<DerivedG>& dy) {
  return (y.array() * (dy.array() - y.dot(dy))).matrix();
}

template <typename Scalar>
Scalar loss_mse(const Vector<Scalar>& pred, const Vector<Scalar>& target) {
  return (pred - target).squaredNorm() / static_cast<Scalar>(pred.size());
}

template <typename Scalar>
Vector<Scalar> loss_mse_grad(const Vector<Scalar>& pred, const Vector<Scalar>& target) {
  return Scalar(2) * (pred - target) / static_cast<Scalar>(pred.size());
}

/// -log softmax(logits)[label], evaluated through log-sum-exp.
template <typename Scalar>
Scalar loss_ce(const Vector<Scalar>& logits, Index label) {
  if (label < 0 || label >= logits.size()) throw Error("invalid_label", "class index out of range");
  const Scalar shift = logits.maxCoeff();
  const Scalar lse = shift + std::log((logits.array() - shift).exp().sum());
  return lse - logits[label];
}

/// softmax(logits) - onehot(label)
template <typename Scalar>
Vector<Scalar> loss_ce_grad(const Vector<Scalar>& logits, Index label) {
  Vector<Scalar> g = softmax(logits);
  g[label] -= Scalar(1);
  return g;
}

// ---------------------------------------------------------------------------
// Dot-product attention over the rows of `values`.

template <typename Scalar>
struct AttentionResult {
  Vector<Scalar> context;
  Vector<Scalar> weights;
};

template <typename Scalar>
AttentionResult<Scalar> attention(const Vector<Scalar>& query, const Matrix<Scalar>& values) {
  if (values.rows() == 0) throw Error("empty_values", "attention needs at least one value");
  if (values.cols() != query.size()) throw Error("shape_mismatch", "query and value widths differ");
  AttentionResult<Scalar> r;
  r.weights = softmax(values * query);
  r.context = values.transpose() * r.weights;
  return r;
}

template <typename Scalar>
struct AttentionGrads {
  Vector<Scalar> query;
  Matrix<Scalar> values;
};

template <typename Scalar>
AttentionGrads<Scalar> attention_backward(const Vector<Scalar>& query, const Matrix<Scalar>& values,
                                          const Vector<Scalar>& weights, const Vector<Scalar>& dcontext) {
  AttentionGrads<Scalar> g;
  const Vector<Scalar> dweights = values * dcontext;
  const Vector<Scalar> dscores = softmax_backward(weights, dweights);
  g.query = values.transpose() * dscores;
  g.values = weights * dcontext.transpose() + dscores * query.transpose();
  return g;
}

// ---------------------------------------------------------------------------
// LSTM with a forget gate. Gate rows are stacked in the order
// forget, input, output, cell.

template <typename Scalar>
struct LstmWeights {
  Eigen::Map<const Matrix<Scalar>> input;      // 4h x d
  Eigen::Map<const Matrix<Scalar>> recurrent;  // 4h x h
  Eigen::Map<const Vector<Scalar>> bias;       // 4h

  Index hidden() const { return bias.size() / 4; }
  Index input_width() const { return input.cols(); }
};

template <typename Scalar>
LstmWeights<Scalar> lstm_weights(const Matrix<Scalar>& input, const Matrix<Scalar>& recurrent,
                                 const Vector<Scalar>& bias) {
  return {{input.data(), input.rows(), input.cols()},
          {recurrent.data(), recurrent.rows(), recurrent.cols()},
          {bias.data(), bias.size()}};
}

template <typename Scalar>
struct LstmState {
  Vector<Scalar> h;
  Vector<Scalar> c;

  static LstmState zero(Index hidden) { return {Vector<Scalar>::Zero(hidden), Vector<Scalar>::Zero(hidden)}; }
};

/// Activations saved by lstm_step for the backward pass.
template <typename Scalar>
struct LstmStepCache {
  Vector<Scalar> x, h_prev, c_prev;
  Vector<Scalar> forget, input, output, candidate;
  Vector<Scalar> c;
};

template <typename Scalar>
LstmState<Scalar> lstm_step(const Vector<Scalar>& x, const LstmState<Scalar>& prev, const LstmWeights<Scalar>& w,
                            LstmStepCache<Scalar>* cache = nullptr) {
  const Index h = w.hidden();
  if (x.size() != w.input_width() || prev.h.size() != h || prev.c.size() != h) {
    throw Error("shape_mismatch", "lstm_step dimensions disagree");
  }
  const Vector<Scalar> pre = w.input * x + w.recurrent * prev.h + w.bias;
  Vector<Scalar> f = logistic(pre.segment(0, h));
  Vector<Scalar> i = logistic(pre.segment(h, h));
  Vector<Scalar> o = logistic(pre.segment(2 * h, h));
  Vector<Scalar> g = pre.segment(3 * h, h).array().tanh().matrix();

  LstmState<Scalar> next;
  next.c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
  next.h = o.cwiseProduct(next.c.array().tanh().matrix());
  if (cache) {
    *cache = {x, prev.h, prev.c, std::move(f), std::move(i), std::move(o), std::move(g), next.c};
  }
  return next;
}

/// Gradients flowing out of one step, plus accumulated parameter gradients.
template <typename Scalar>
struct LstmStepGrads {
  Vector<Scalar> x, h_prev, c_prev;
};

template <typename Scalar>
LstmStepGrads<Scalar> lstm_step_backward(const LstmStepCache<Scalar>& k, const LstmWeights<Scalar>& w,
                                         const Vector<Scalar>& dh, const Vector<Scalar>& dc_next,
                                         Eigen::Ref<Matrix<Scalar>> dinput, Eigen::Ref<Matrix<Scalar>> drecurrent,
                                         Eigen::Ref<Vector<Scalar>> dbias) {
  const Index h = w.hidden();
  const auto tanh_c = k.c.array().tanh();
  const auto one = Scalar(1);
  const Vector<Scalar> dc = (dc_next.array() + dh.array() * k.output.array() * (one - tanh_c.square())).matrix();

  Vector<Scalar> dpre(4 * h);
  dpre.segment(0, h) = (dc.array() * k.c_prev.array() * k.forget.array() * (one - k.forget.array())).matrix();
  dpre.segment(h, h) = (dc.array() * k.candidate.array() * k.input.array() * (one - k.input.array())).matrix();
  dpre.segment(2 * h, h) = (dh.array() * tanh_c * k.output.array() * (one - k.output.array())).matrix();
  dpre.segment(3 * h, h) = (dc.array() * k.input.array() * (one - k.candidate.array().square())).matrix();

  dinput.noalias() += dpre * k.x.transpose();
  drecurrent.noalias() += dpre * k.h_prev.transpose();
  dbias += dpre;

  LstmStepGrads<Scalar> g;
  g.x = w.input.transpose() * dpre;
  g.h_prev = w.recurrent.transpose() * dpre;
  g.c_prev = dc.cwiseProduct(k.forget);
  return g;
}

/// Output of a (possibly multi-layer) masked LSTM pass.
template <typename Scalar>
struct LstmSequence {
  Matrix<Scalar> hidden;  // T x h, top layer; masked rows carry the state through
  Vector<Scalar> final_h;
  Index last_valid = -1;
};

/// Runs stacked LSTM layers over the rows of `seq`. Masked steps are skipped:
/// their inputs are never read and the state passes through unchanged.
/// `caches`, when given, receives per-layer per-step caches (valid steps only
/// hold data).
template <typename Scalar>
LstmSequence<Scalar> lstm_forward(const Matrix<Scalar>& seq, const std::vector<bool>& valid,
                                  const std::vector<LstmWeights<Scalar>>& layers,
                                  std::vector<std::vector<LstmStepCache<Scalar>>>* caches = nullptr) {
  const Index steps = seq.rows();
  if (static_cast<Index>(valid.size()) != steps) throw Error("shape_mismatch", "mask length differs from sequence");
  if (layers.empty()) throw Error("shape_mismatch", "lstm_forward needs at least one layer");
  LstmSequence<Scalar> out;
  for (Index t = 0; t < steps; ++t) {
    if (valid[static_cast<std::size_t>(t)]) out.last_valid = t;
  }
  if (out.last_valid < 0) throw Error("empty_mask", "sequence has no valid step");

  if (caches) caches->assign(layers.size(), std::vector<LstmStepCache<Scalar>>(static_cast<std::size_t>(steps)));
  Matrix<Scalar> input = seq;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l];
    Matrix<Scalar> hidden(steps, w.hidden());
    auto state = LstmState<Scalar>::zero(w.hidden());
    for (Index t = 0; t < steps; ++t) {
      if (valid[static_cast<std::size_t>(t)]) {
        const Vector<Scalar> x = input.row(t).transpose();
        state = lstm_step(x, state, w, caches ? &(*caches)[l][static_cast<std::size_t>(t)] : nullptr);
      }
      hidden.row(t) = state.h.transpose();
    }
    input = std::move(hidden);
  }
  out.hidden = std::move(input);
  out.final_h = out.hidden.row(out.last_valid).transpose();
  return out;
}

}  // namespace marl::nn
