#include "marl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace marl {

namespace {

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("io_error", path.string() + ": write failed");
}

}  // namespace

std::string metrics_csv(const MetricsReport& r) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (const auto& e : r.epochs) {
    out += std::to_string(e.epoch) + "," + format("%.17g", e.train_loss) + "," + format("%.17g", e.val_loss) + "\n";
  }
  return out;
}

std::string confusion_csv(const MetricsReport& r) {
  std::string out = "true";
  for (Index j = 0; j < r.confusion.cols(); ++j) out += ",pred_" + std::to_string(j);
  out += "\n";
  for (Index i = 0; i < r.confusion.rows(); ++i) {
    out += std::to_string(i);
    for (Index j = 0; j < r.confusion.cols(); ++j) out += "," + std::to_string(r.confusion(i, j));
    out += "\n";
  }
  return out;
}

std::string loss_curve_svg(const MetricsReport& r) {
  constexpr double width = 640, height = 400, left = 60, right = 20, top = 20, bottom = 40;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& e : r.epochs) {
    for (double v : {e.train_loss, e.val_loss}) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!(hi >= lo)) lo = 0.0, hi = 1.0;
  if (hi == lo) hi = lo + 1.0;
  const double last = r.epochs.empty() ? 1.0 : std::max(1, r.epochs.back().epoch);
  auto x = [&](double epoch) { return left + plot_w * epoch / last; };
  auto y = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<line x1=\"60\" y1=\"360\" x2=\"620\" y2=\"360\" stroke=\"black\"/>\n";
  svg += "<line x1=\"60\" y1=\"20\" x2=\"60\" y2=\"360\" stroke=\"black\"/>\n";
  svg += "<text x=\"340\" y=\"392\" font-size=\"12\" text-anchor=\"middle\">epoch</text>\n";
  svg += "<text x=\"56\" y=\"24\" font-size=\"11\" text-anchor=\"end\">" + format("%.4g", hi) + "</text>\n";
  svg += "<text x=\"56\" y=\"360\" font-size=\"11\" text-anchor=\"end\">" + format("%.4g", lo) + "</text>\n";
  const std::pair<const char*, double EpochLoss::*> series[] = {{"#1f77b4", &EpochLoss::train_loss},
                                                                {"#d62728", &EpochLoss::val_loss}};
  for (const auto& [colour, field] : series) {
    std::string points;
    for (const auto& e : r.epochs) {
      if (!std::isfinite(e.*field)) continue;
      if (!points.empty()) points += " ";
      points += format("%.2f", x(e.epoch)) + "," + format("%.2f", y(e.*field));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
  }
  svg += "<text x=\"600\" y=\"36\" font-size=\"12\" text-anchor=\"end\" fill=\"#1f77b4\">train</text>\n";
  svg += "<text x=\"600\" y=\"52\" font-size=\"12\" text-anchor=\"end\" fill=\"#d62728\">validation</text>\n";
  svg += "</svg>\n";
  return svg;
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("io_error", dir.string() + ": " + ec.message());
  write_file(dir / "metrics.csv", metrics_csv(report));
  write_file(dir / "confusion.csv", confusion_csv(report));
  write_file(dir / "loss_curve.svg", loss_curve_svg(report));
  write_file(dir / "metrics.json", to_json(report).dump(2) + "\n");
}

}  // namespace marl
