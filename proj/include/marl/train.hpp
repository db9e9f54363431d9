#pragma once

#include "marl/config.hpp"
#include "marl/nn/model.hpp"
#include "marl/pipeline.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace marl {

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct MetricsReport {
  nn::Task task = nn::Task::regress;
  nn::Variant variant = nn::Variant::v1;
  std::vector<EpochLoss> epochs;
  int best_epoch = 0;  // 0 means the initial weights
  std::string split = "test";  // split the final metrics were computed on
  std::optional<double> r2;
  std::optional<double> accuracy;
  Eigen::MatrixXi confusion;  // classification only; rows true, columns predicted
  std::vector<double> predictions;  // raw-scale FVC or class index
  std::vector<double> targets;
  double seconds = 0.0;
};

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& doc);

nn::ModelConfig model_config(const TrainConfig& config);

/// Metrics of `model` on one split. Regression predictions are mapped back to
/// millilitres before R² is computed.
MetricsReport evaluate(const nn::Model& model, const PreparedDataset& data, Split split);

struct TrainResult {
  nn::Model model;
  MetricsReport report;
};

/// Mini-batch Adam on the training split. The returned model holds the weights
/// of the epoch with the lowest validation loss (training loss when there is
/// no validation split); metrics are computed on the test split, or the
/// validation split if the test split is empty. Throws "non_finite_loss"
/// naming the epoch and batch.
TrainResult train(const TrainConfig& config, const PreparedDataset& data);

}  // namespace marl
