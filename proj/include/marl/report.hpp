#pragma once

#include "marl/train.hpp"

#include <filesystem>
#include <string>

namespace marl {

/// Per-epoch losses as CSV (epoch,train_loss,val_loss). Wall-clock time is
/// left out so that identical runs give identical files.
std::string metrics_csv(const MetricsReport& report);

/// counts(true, predicted) with a header row; header only for regression.
std::string confusion_csv(const MetricsReport& report);

std::string loss_curve_svg(const MetricsReport& report);

/// Writes metrics.csv, confusion.csv, loss_curve.svg and metrics.json into
/// `dir`, replacing existing files. Throws "io_error" if a file can't be written.
void write_report(const MetricsReport& report, const std::filesystem::path& dir);

}  // namespace marl
