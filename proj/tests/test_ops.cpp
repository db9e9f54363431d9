#include <doctest.h>

#include "marl/nn/gradcheck.hpp"
#include "marl/nn/ops.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace marl;
using namespace marl::nn;
using marl::test::error_code;

namespace {

VectorXd random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

MatrixXd random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  MatrixXd m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = random_vector(1, rng, scale)[0];
  return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("softmax") {
  const VectorXd y = softmax(Eigen::Vector3d(1, 2, 3));
  const double z = std::exp(1) + std::exp(2) + std::exp(3);
  CHECK(y[0] == doctest::Approx(std::exp(1) / z).epsilon(1e-14));
  CHECK(y[2] == doctest::Approx(std::exp(3) / z).epsilon(1e-14));
  CHECK(y.sum() == doctest::Approx(1.0).epsilon(1e-15));

  const VectorXd big = softmax(Eigen::Vector2d(1000.0, 1000.0));
  CHECK(big[0] == 0.5);
  CHECK(big[1] == 0.5);
  CHECK(error_code([] { softmax(VectorXd()); }) == "empty_input");

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorXd x = random_vector(6, rng, 5.0);
    const VectorXd s = softmax(x);
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.minCoeff() > 0.0);
    const VectorXd shifted = softmax((x.array() + 17.0).matrix());
    CHECK((s - shifted).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("softmax backward matches finite differences") {
  std::mt19937_64 rng(2);
  const VectorXd x = random_vector(5, rng), dy = random_vector(5, rng);
  auto f = [&](const VectorXd& v) { return softmax(v).dot(dy); };
  const auto r = grad_check_function(f, x, softmax_backward(softmax(x), dy));
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("losses") {
  const Eigen::Vector2d pred(1.0, 3.0), target(0.0, 1.0);
  CHECK(loss_mse<double>(pred, target) == 2.5);
  CHECK(loss_mse_grad<double>(pred, target) == Eigen::Vector2d(1.0, 2.0));

  for (Index k : {2, 3, 7}) {
    const VectorXd zeros = VectorXd::Zero(k);
    CHECK(loss_ce<double>(zeros, 0) == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-15));
  }
  CHECK(error_code([] { loss_ce<double>(VectorXd::Zero(3), 3); }) == "invalid_label");
  CHECK(error_code([] { loss_ce<double>(VectorXd::Zero(3), -1); }) == "invalid_label");

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd logits = random_vector(3, rng, 3.0);
    const Index label = trial % 3;
    const VectorXd g = loss_ce_grad<double>(logits, label);
    VectorXd expected = softmax(logits);
    expected[label] -= 1.0;
    CHECK((g - expected).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(std::abs(g.sum()) < 1e-14);
    auto f = [&](const VectorXd& v) { return loss_ce<double>(v, label); };
    CHECK(grad_check_function(f, logits, g).max_rel_error < 1e-5);
  }
}

TEST_CASE("attention examples") {
  SUBCASE("equal scores average the values") {
    MatrixXd values(2, 2);
    values << 1, 0, 0, 1;
    const auto r = attention<double>(VectorXd::Zero(2), values);
    CHECK(r.weights == Eigen::Vector2d(0.5, 0.5));
    CHECK(r.context == Eigen::Vector2d(0.5, 0.5));
  }
  SUBCASE("a single value is returned unchanged") {
    MatrixXd values(1, 3);
    values << 2, -1, 4;
    const auto r = attention<double>(Eigen::Vector3d(5, 6, 7), values);
    CHECK(r.weights[0] == 1.0);
    CHECK(r.context == Eigen::Vector3d(2, -1, 4));
  }
  SUBCASE("scores are dot products") {
    MatrixXd values(2, 1);
    values << 1, 2;
    const auto r = attention<double>(VectorXd::Constant(1, std::log(3.0)), values);
    // scores ln3, 2 ln3 -> weights 3/12, 9/12
    CHECK(r.weights[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(r.context[0] == doctest::Approx(0.25 + 1.5).epsilon(1e-14));
  }
  CHECK(error_code([] { attention<double>(VectorXd::Zero(2), MatrixXd(0, 2)); }) == "empty_values");
  CHECK(error_code([] { attention<double>(VectorXd::Zero(2), MatrixXd::Zero(3, 4)); }) == "shape_mismatch");
}

TEST_CASE("attention backward matches finite differences") {
  std::mt19937_64 rng(4);
  const Index n = 4, d = 3;
  const VectorXd q = random_vector(d, rng);
  const MatrixXd v = random_matrix(n, d, rng);
  const VectorXd dctx = random_vector(d, rng);
  const auto fwd = attention<double>(q, v);
  const auto g = attention_backward<double>(q, v, fwd.weights, dctx);

  auto fq = [&](const VectorXd& x) { return attention<double>(x, v).context.dot(dctx); };
  CHECK(grad_check_function(fq, q, g.query).max_rel_error < 1e-5);

  const VectorXd vflat = Eigen::Map<const VectorXd>(v.data(), v.size());
  auto fv = [&](const VectorXd& x) {
    const MatrixXd m = Eigen::Map<const MatrixXd>(x.data(), n, d);
    return attention<double>(q, m).context.dot(dctx);
  };
  const VectorXd gv = Eigen::Map<const VectorXd>(g.values.data(), g.values.size());
  CHECK(grad_check_function(fv, vflat, gv).max_rel_error < 1e-5);
}

TEST_CASE("lstm_step matches a scalar transcription") {
  std::mt19937_64 rng(5);
  const Index h = 3, d = 2;
  const MatrixXd wi = random_matrix(4 * h, d, rng), wr = random_matrix(4 * h, h, rng);
  const VectorXd b = random_vector(4 * h, rng);
  const auto w = lstm_weights<double>(wi, wr, b);
  const VectorXd x = random_vector(d, rng);
  LstmState<double> prev{random_vector(h, rng), random_vector(h, rng)};
  const auto next = lstm_step<double>(x, prev, w);

  for (Index j = 0; j < h; ++j) {
    double pre[4];
    for (int gate = 0; gate < 4; ++gate) {
      const Index row = gate * h + j;
      double s = b[row];
      for (Index k = 0; k < d; ++k) s += wi(row, k) * x[k];
      for (Index k = 0; k < h; ++k) s += wr(row, k) * prev.h[k];
      pre[gate] = s;
    }
    const double f = sigmoid(pre[0]), i = sigmoid(pre[1]), o = sigmoid(pre[2]), g = std::tanh(pre[3]);
    const double c = f * prev.c[j] + i * g;
    CHECK(next.c[j] == doctest::Approx(c).epsilon(1e-14));
    CHECK(next.h[j] == doctest::Approx(o * std::tanh(c)).epsilon(1e-14));
  }
}

TEST_CASE("scalar lstm with all weights 0.5") {
  const MatrixXd wi = MatrixXd::Constant(4, 1, 0.5), wr = MatrixXd::Constant(4, 1, 0.5);
  const VectorXd b = VectorXd::Zero(4);
  const auto s = lstm_step<double>(VectorXd::Ones(1), LstmState<double>::zero(1), lstm_weights<double>(wi, wr, b));
  // Every gate sees 0.5 * 1 + 0.5 * 0 = 0.5.
  const double gate = 1.0 / (1.0 + std::exp(-0.5));
  const double c = gate * std::tanh(0.5);
  CHECK(s.c[0] == doctest::Approx(c).epsilon(1e-15));
  CHECK(s.h[0] == doctest::Approx(gate * std::tanh(c)).epsilon(1e-15));
  CHECK(s.c[0] == doctest::Approx(0.2876491).epsilon(1e-6));
}

TEST_CASE("a saturated forget gate with a closed input gate keeps the cell") {
  const Index h = 2, d = 1;
  const MatrixXd wi = MatrixXd::Zero(4 * h, d), wr = MatrixXd::Zero(4 * h, h);
  VectorXd b = VectorXd::Zero(4 * h);
  b.segment(0, h).setConstant(30.0);
  b.segment(h, h).setConstant(-30.0);
  const auto w = lstm_weights<double>(wi, wr, b);
  LstmState<double> s{VectorXd::Zero(h), Eigen::Vector2d(0.7, -1.3)};
  for (int t = 0; t < 10; ++t) s = lstm_step<double>(VectorXd::Ones(d), s, w);
  CHECK(s.c[0] == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(s.c[1] == doctest::Approx(-1.3).epsilon(1e-10));
}

TEST_CASE("lstm_step backward matches finite differences") {
  std::mt19937_64 rng(6);
  const Index h = 3, d = 2;
  MatrixXd wi = random_matrix(4 * h, d, rng), wr = random_matrix(4 * h, h, rng);
  VectorXd b = random_vector(4 * h, rng);
  const VectorXd x = random_vector(d, rng), h0 = random_vector(h, rng), c0 = random_vector(h, rng);
  const VectorXd dh = random_vector(h, rng), dc = random_vector(h, rng);

  // Objective: <dh, h'> + <dc, c'> as a function of every input, packed.
  const Index n = d + 2 * h + wi.size() + wr.size() + b.size();
  auto unpack_eval = [&](const VectorXd& z) {
    Index o = 0;
    const VectorXd xx = z.segment(o, d);
    o += d;
    LstmState<double> prev{z.segment(o, h), z.segment(o + h, h)};
    o += 2 * h;
    const MatrixXd a = Eigen::Map<const MatrixXd>(z.data() + o, 4 * h, d);
    o += a.size();
    const MatrixXd r = Eigen::Map<const MatrixXd>(z.data() + o, 4 * h, h);
    o += r.size();
    const VectorXd bb = z.segment(o, 4 * h);
    const auto next = lstm_step<double>(xx, prev, lstm_weights<double>(a, r, bb));
    return dh.dot(next.h) + dc.dot(next.c);
  };
  VectorXd z(n);
  z << x, h0, c0, Eigen::Map<const VectorXd>(wi.data(), wi.size()), Eigen::Map<const VectorXd>(wr.data(), wr.size()), b;

  LstmStepCache<double> cache;
  const auto w = lstm_weights<double>(wi, wr, b);
  lstm_step<double>(x, {h0, c0}, w, &cache);
  MatrixXd dwi = MatrixXd::Zero(4 * h, d), dwr = MatrixXd::Zero(4 * h, h);
  VectorXd db = VectorXd::Zero(4 * h);
  const auto g = lstm_step_backward<double>(cache, w, dh, dc, dwi, dwr, db);
  VectorXd analytic(n);
  analytic << g.x, g.h_prev, g.c_prev, Eigen::Map<const VectorXd>(dwi.data(), dwi.size()),
      Eigen::Map<const VectorXd>(dwr.data(), dwr.size()), db;
  CHECK(grad_check_function(unpack_eval, z, analytic).max_rel_error < 1e-5);
}

TEST_CASE("lstm hidden states stay inside (-1, 1)") {
  std::mt19937_64 rng(8);
  const Index h = 4, d = 3;
  const MatrixXd wi = random_matrix(4 * h, d, rng), wr = random_matrix(4 * h, h, rng);
  const VectorXd b = random_vector(4 * h, rng);
  const std::vector<LstmWeights<double>> layers = {lstm_weights<double>(wi, wr, b), lstm_weights<double>(wr, wr, b)};
  const MatrixXd seq = random_matrix(20, d, rng, 3.0);
  const auto out = lstm_forward<double>(seq, std::vector<bool>(20, true), layers);
  CHECK(out.hidden.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("lstm_forward skips masked steps") {
  std::mt19937_64 rng(7);
  const Index h = 3, d = 2;
  const MatrixXd wi = random_matrix(4 * h, d, rng), wr = random_matrix(4 * h, h, rng);
  const VectorXd b = random_vector(4 * h, rng);
  const std::vector<LstmWeights<double>> layers = {lstm_weights<double>(wi, wr, b)};

  MatrixXd seq = random_matrix(4, d, rng);
  const std::vector<bool> valid = {false, true, false, true};
  const auto a = lstm_forward<double>(seq, valid, layers);
  seq.row(0).setConstant(1e6);
  seq.row(2).setConstant(-1e6);
  const auto c = lstm_forward<double>(seq, valid, layers);
  CHECK(a.final_h == c.final_h);
  CHECK(a.last_valid == 3);
  CHECK(a.hidden.row(0).isZero());
  CHECK(a.hidden.row(1) == a.hidden.row(2));

  const MatrixXd compact = (MatrixXd(2, d) << seq.row(1), seq.row(3)).finished();
  const auto e = lstm_forward<double>(compact, {true, true}, layers);
  CHECK(e.final_h == a.final_h);

  CHECK(error_code([&] { lstm_forward<double>(seq, {false, false, false, false}, layers); }) == "empty_mask");
  CHECK(error_code([&] { lstm_forward<double>(seq, {true}, layers); }) == "shape_mismatch");
}
