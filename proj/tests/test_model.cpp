#include <doctest.h>

#include "marl/nn/gradcheck.hpp"
#include "marl/nn/model.hpp"
#include "test_util.hpp"

#include <cstring>
#include <random>

using namespace marl;
using namespace marl::nn;
using marl::test::error_code;

namespace {

bool bitwise_equal(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("parameter layout") {
  ParamLayout layout;
  CHECK(layout.add("a", 2, 3) == 0);
  CHECK(layout.add("b", 4, 1) == 1);
  CHECK(layout.total() == 10);
  CHECK(layout.block(1).offset == 6);
  CHECK(layout.owner(5).name == "a");
  CHECK(layout.owner(6).name == "b");
  CHECK(*layout.find("b") == 1);
  CHECK(!layout.find("c"));

  const VectorXd flat = VectorXd::LinSpaced(10, 0, 9);
  const auto parts = layout.unpack(flat);
  CHECK(parts[0](1, 2) == 5.0);  // column-major
  CHECK(layout.pack(parts) == flat);
}

TEST_CASE("variant and task names round-trip") {
  for (Variant v : {Variant::v1, Variant::v2, Variant::lstm_only}) CHECK(parse_variant(to_string(v)) == v);
  for (Task t : {Task::regress, Task::binary, Task::multiclass}) CHECK(parse_task(to_string(t)) == t);
  CHECK(task_outputs(Task::regress) == 1);
  CHECK(task_outputs(Task::multiclass) == 3);
  CHECK(error_code([] { parse_variant("v3"); }) == "invalid_config");
}

TEST_CASE("initialisation is seeded") {
  ModelConfig c;
  const Model a(c), b(c);
  CHECK(bitwise_equal(a.params(), b.params()));
  c.seed = 8;
  const Model d(c);
  CHECK(!bitwise_equal(a.params(), d.params()));
}

TEST_CASE("forward shapes per variant") {
  for (Task task : {Task::regress, Task::binary, Task::multiclass}) {
    for (Variant v : {Variant::v1, Variant::v2, Variant::lstm_only}) {
      const auto f = make_gradcheck_fixture(v, task);
      const ForwardTrace t = f.model.forward(f.samples[0]);
      CHECK(t.output.size() == task_outputs(task));
      if (v == Variant::v1) {
        CHECK(t.attention.weights.size() == 2);  // one per valid visit
        CHECK(t.value_rows == std::vector<Index>{1, 2});
      } else if (v == Variant::v2) {
        CHECK(t.attention.weights.size() == 1);  // 8x8 image pooled three times
        CHECK(t.values.cols() == 3);
      } else {
        CHECK(t.fused.size() == 4);
      }
      if (v != Variant::lstm_only) {
        CHECK(t.attention.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("whole-model gradients match central differences") {
  for (Task task : {Task::regress, Task::binary, Task::multiclass}) {
    for (Variant v : {Variant::v1, Variant::v2, Variant::lstm_only}) {
      auto f = make_gradcheck_fixture(v, task);
      const auto r = grad_check(f.model, f.batch());
      CAPTURE(to_string(v));
      CAPTURE(to_string(task));
      CAPTURE(r.worst_block);
      CHECK(r.max_rel_error < 1e-4);
      CHECK(r.checked > r.skipped_kinks);
    }
  }
}

TEST_CASE("loss_and_gradient averages per-sample gradients") {
  auto f = make_gradcheck_fixture(Variant::v1, Task::regress);
  VectorXd both, one, two;
  const double l = f.model.loss_and_gradient(f.batch(), both);
  const double l1 = f.model.loss_and_gradient({&f.samples[0]}, one);
  const double l2 = f.model.loss_and_gradient({&f.samples[1]}, two);
  CHECK(l == doctest::Approx(0.5 * (l1 + l2)).epsilon(1e-14));
  CHECK((both - 0.5 * (one + two)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(l == doctest::Approx(f.model.loss(f.batch())).epsilon(1e-14));
  CHECK(error_code([&] { f.model.loss({}); }) == "empty_batch");
}

TEST_CASE("padded timesteps have no influence") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> big(0.0, 1e3);
  for (Variant v : {Variant::v1, Variant::v2, Variant::lstm_only}) {
    auto f = make_gradcheck_fixture(v, Task::multiclass);
    Sample perturbed = f.samples[0];
    for (Index c = 0; c < perturbed.visits.cols(); ++c) perturbed.visits(0, c) = big(rng);

    VectorXd ga, gb;
    const double la = f.model.loss_and_gradient({&f.samples[0]}, ga);
    const double lb = f.model.loss_and_gradient({&perturbed}, gb);
    CHECK(bitwise_equal(f.model.predict(f.samples[0]), f.model.predict(perturbed)));
    CHECK(std::memcmp(&la, &lb, sizeof la) == 0);
    CHECK(bitwise_equal(ga, gb));
  }
}

TEST_CASE("input width is checked") {
  auto f = make_gradcheck_fixture(Variant::v1, Task::regress);
  Sample s = f.samples[0];
  s.visits = MatrixXd::Zero(3, 6);
  CHECK(error_code([&] { f.model.forward(s); }) == "shape_mismatch");
}
