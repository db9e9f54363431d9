#include <doctest.h>

#include "marl/synth.hpp"
#include "marl/train.hpp"
#include "test_util.hpp"

using namespace marl;
using marl::test::error_code;
using marl::test::TempDir;

namespace {

PreparedDataset tiny_dataset(int patients, std::array<double, 3> split) {
  static TempDir dir("train");
  Config c;
  c.synth.n_patients = patients;
  c.synth.image_size = 64;
  c.ingest.size = 64;
  c.prepare.split = split;
  const auto where = dir / ("cohort" + std::to_string(patients));
  if (!std::filesystem::exists(where / "records.csv")) write_dataset(synth_generate(c.synth), where);
  return prepare_from_raw(where, c);
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 4;
  c.lstm_hidden = 8;
  c.head_width = 8;
  c.conv_channels = {2, 4, 4};
  return c;
}

}  // namespace

TEST_CASE("zero learning rate keeps the initial weights") {
  const auto data = tiny_dataset(8, {0.7, 0.15, 0.15});
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  const auto result = train(c, data);
  const nn::Model fresh(model_config(c));
  CHECK(result.model.params() == fresh.params());
  CHECK(result.report.best_epoch == 0);
  CHECK(result.report.epochs.size() == 3);
}

TEST_CASE("training is deterministic") {
  const auto data = tiny_dataset(8, {0.7, 0.15, 0.15});
  const TrainConfig c = small_config();
  const auto a = train(c, data), b = train(c, data);
  CHECK(a.model.params() == b.model.params());
  for (std::size_t e = 0; e < a.report.epochs.size(); ++e) {
    CHECK(a.report.epochs[e].train_loss == b.report.epochs[e].train_loss);
  }
  CHECK(a.report.predictions == b.report.predictions);
}

TEST_CASE("a few patients can be fitted closely") {
  const auto data = tiny_dataset(4, {1.0, 0.0, 0.0});
  TrainConfig c;
  c.epochs = 200;
  c.batch_size = 4;
  const auto samples = make_samples(data, c.task);
  std::vector<const nn::Sample*> all;
  for (const auto& s : samples) all.push_back(&s);
  const double initial = nn::Model(model_config(c)).loss(all);

  const auto result = train(c, data);
  CHECK(result.report.split == "train");
  CHECK(result.model.loss(all) < 0.01 * initial);
}

TEST_CASE("validation-selected weights are no worse than the last epoch") {
  const auto data = tiny_dataset(8, {0.5, 0.25, 0.25});
  TrainConfig c = small_config();
  c.epochs = 6;
  const auto result = train(c, data);
  const auto samples = make_samples(data, c.task);
  std::vector<const nn::Sample*> val;
  for (std::size_t i : data.indices(Split::val)) val.push_back(&samples[i]);
  CHECK(result.model.loss(val) <= result.report.epochs.back().val_loss);
  if (result.report.best_epoch > 0) {
    CHECK(result.model.loss(val) == result.report.epochs[static_cast<std::size_t>(result.report.best_epoch - 1)].val_loss);
  }
}

TEST_CASE("classification reports accuracy and a full confusion matrix") {
  const auto data = tiny_dataset(8, {0.5, 0.25, 0.25});
  TrainConfig c = small_config();
  c.task = nn::Task::multiclass;
  const auto r = train(c, data).report;
  REQUIRE(r.accuracy);
  CHECK(!r.r2);
  CHECK(r.confusion.rows() == 3);
  CHECK(r.confusion.sum() == static_cast<int>(data.indices(Split::test).size()));
  CHECK(*r.accuracy == doctest::Approx(static_cast<double>(r.confusion.trace()) / r.confusion.sum()));
}

TEST_CASE("evaluate maps regression outputs back to millilitres") {
  const auto data = tiny_dataset(8, {0.7, 0.15, 0.15});
  const TrainConfig c = small_config();
  const nn::Model m(model_config(c));
  const auto r = evaluate(m, data, Split::train);
  const auto samples = make_samples(data, nn::Task::regress);
  const auto idx = data.indices(Split::train);
  REQUIRE(r.predictions.size() == idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    CHECK(r.targets[k] == data.sequences[idx[k]].label_fvc);
    CHECK(r.predictions[k] == doctest::Approx(m.predict(samples[idx[k]])[0] * data.label_std + data.label_mean));
  }
}

TEST_CASE("binary training on a single-class cohort predicts that class") {
  TempDir dir("train_oneclass");
  Config c;
  c.synth.n_patients = 8;
  c.synth.image_size = 64;
  c.synth.fvc_intercept = 5000.0;
  c.ingest.size = 64;
  write_dataset(synth_generate(c.synth), dir.path());
  const auto data = prepare_from_raw(dir.path(), c);
  for (const auto& s : data.sequences) REQUIRE(s.label_binary == 1);

  TrainConfig t = small_config();
  t.task = nn::Task::binary;
  t.epochs = 20;
  t.learning_rate = 1e-2;
  const auto r = train(t, data).report;
  CHECK(*r.accuracy == 1.0);
  CHECK(r.confusion(1, 1) == r.confusion.sum());
}

TEST_CASE("invalid configurations are rejected") {
  const auto data = tiny_dataset(8, {0.7, 0.15, 0.15});
  TrainConfig c = small_config();
  c.batch_size = 0;
  CHECK(error_code([&] { train(c, data); }) == "invalid_config");
}
