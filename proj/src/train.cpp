#include "marl/train.hpp"

#include "marl/metrics.hpp"
#include "marl/nn/adam.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace marl {

using nlohmann::json;

json to_json(const MetricsReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  json confusion = json::array();
  for (Index i = 0; i < r.confusion.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < r.confusion.cols(); ++j) row.push_back(r.confusion(i, j));
    confusion.push_back(row);
  }
  json doc = {{"task", nn::to_string(r.task)},
              {"variant", nn::to_string(r.variant)},
              {"epochs", epochs},
              {"best_epoch", r.best_epoch},
              {"split", r.split},
              {"confusion", confusion},
              {"predictions", r.predictions},
              {"targets", r.targets},
              {"seconds", r.seconds}};
  doc["r2"] = r.r2 ? json(*r.r2) : json(nullptr);
  doc["accuracy"] = r.accuracy ? json(*r.accuracy) : json(nullptr);
  return doc;
}

MetricsReport metrics_from_json(const json& doc) {
  MetricsReport r;
  r.task = nn::parse_task(doc.at("task").get<std::string>());
  r.variant = nn::parse_variant(doc.at("variant").get<std::string>());
  for (const auto& e : doc.at("epochs")) {
    r.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>()});
  }
  r.best_epoch = doc.at("best_epoch").get<int>();
  r.split = doc.value("split", "test");
  if (!doc.at("r2").is_null()) r.r2 = doc.at("r2").get<double>();
  if (!doc.at("accuracy").is_null()) r.accuracy = doc.at("accuracy").get<double>();
  const auto& rows = doc.at("confusion");
  r.confusion.resize(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
  for (Index i = 0; i < r.confusion.rows(); ++i) {
    for (Index j = 0; j < r.confusion.cols(); ++j) r.confusion(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<int>();
  }
  r.predictions = doc.at("predictions").get<std::vector<double>>();
  r.targets = doc.at("targets").get<std::vector<double>>();
  r.seconds = doc.value("seconds", 0.0);
  return r;
}

nn::ModelConfig model_config(const TrainConfig& c) {
  nn::ModelConfig m;
  m.conv_channels = c.conv_channels;
  m.lstm_hidden = c.lstm_hidden;
  m.head_width = c.head_width;
  m.variant = c.variant;
  m.task = c.task;
  m.seed = c.seed;
  return m;
}

namespace {

std::vector<const nn::Sample*> pointers(const std::vector<nn::Sample>& samples, const std::vector<std::size_t>& idx) {
  std::vector<const nn::Sample*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&samples[i]);
  return out;
}

}  // namespace

MetricsReport evaluate(const nn::Model& model, const PreparedDataset& data, Split split) {
  const auto task = model.config().task;
  const auto idx = data.indices(split);
  const auto samples = make_samples(data, task);
  std::vector<VectorXd> outputs(idx.size());
  parallel_for(idx.size(), [&](std::size_t k) { outputs[k] = model.predict(samples[idx[k]]); });

  MetricsReport r;
  r.task = task;
  r.variant = model.config().variant;
  r.split = std::string(to_string(split));
  if (task == nn::Task::regress) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      r.predictions.push_back(outputs[k](0) * data.label_std + data.label_mean);
      r.targets.push_back(data.sequences[idx[k]].label_fvc);
    }
    r.r2 = r2(r.predictions, r.targets);
  } else {
    std::vector<int> pred, truth;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      pred.push_back(argmax(outputs[k]));
      truth.push_back(samples[idx[k]].label);
      r.predictions.push_back(pred.back());
      r.targets.push_back(truth.back());
    }
    r.accuracy = accuracy(pred, truth);
    r.confusion = confusion(pred, truth, nn::task_outputs(task));
  }
  return r;
}

TrainResult train(const TrainConfig& config, const PreparedDataset& data) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  const auto samples = make_samples(data, config.task);
  auto train_idx = data.indices(Split::train);
  const auto val_idx = data.indices(Split::val);
  if (train_idx.empty()) throw Error("empty_split", "no training patients");
  const auto val = pointers(samples, val_idx.empty() ? train_idx : val_idx);

  nn::Model model(model_config(config));
  model.initialize();
  auto state = nn::AdamState::zeros(model.layout().total());
  nn::AdamHyper hyper;
  hyper.learning_rate = config.learning_rate;
  std::mt19937_64 rng(config.seed);

  VectorXd best = model.params();
  double best_loss = model.loss(val);
  int best_epoch = 0;
  std::vector<EpochLoss> history;
  VectorXd grad;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0, start_at = 0; start_at < train_idx.size(); ++b, start_at += batch_size) {
      const std::vector<std::size_t> chunk(train_idx.begin() + static_cast<std::ptrdiff_t>(start_at),
                                           train_idx.begin() + static_cast<std::ptrdiff_t>(std::min(start_at + batch_size, train_idx.size())));
      const double loss = model.loss_and_gradient(pointers(samples, chunk), grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw Error("non_finite_loss", "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      nn::adam_step(model.params(), grad, state, hyper);
      total += loss * static_cast<double>(chunk.size());
    }
    const double val_loss = model.loss(val);
    history.push_back({epoch, total / static_cast<double>(train_idx.size()), val_loss});
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best = model.params();
      best_epoch = epoch;
    }
  }
  model.params() = best;

  const Split eval_split = !data.indices(Split::test).empty() ? Split::test : (!val_idx.empty() ? Split::val : Split::train);
  MetricsReport report = evaluate(model, data, eval_split);
  report.epochs = std::move(history);
  report.best_epoch = best_epoch;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

}  // namespace marl
