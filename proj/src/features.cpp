#include "marl/features.hpp"

#include <cmath>
#include <limits>

namespace marl {

VisualStats extract_stats(const HuImage& img, const LungMask& mask) {
  if (img.width() != mask.width() || img.height() != mask.height()) {
    throw Error("dimension_mismatch", "image and mask dimensions differ");
  }
  VisualStats s;
  const Index n = mask.count();
  if (n == 0) return s;

  const auto selected = mask.bits.cast<double>();
  const auto& in_mask = mask.bits;
  s.volume = static_cast<double>(n);
  s.mean = (img.values.array() * selected).sum() / s.volume;

  const double lo = in_mask.select(img.values.array(), std::numeric_limits<double>::infinity()).minCoeff();
  const double hi = in_mask.select(img.values.array(), -std::numeric_limits<double>::infinity()).maxCoeff();
  if (lo == hi) {
    s.mean = lo;  // exact for constant regions
    return s;
  }

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (Index r = 0; r < img.values.rows(); ++r) {
    for (Index c = 0; c < img.values.cols(); ++c) {
      if (!mask.bits(r, c)) continue;
      const double d = img.values(r, c) - s.mean;
      const double d2 = d * d;
      m2 += d2;
      m3 += d2 * d;
      m4 += d2 * d2;
    }
  }
  s.m2 = m2 / s.volume;
  s.m3 = m3 / s.volume;
  s.m4 = m4 / s.volume;
  if (s.m2 > 0.0) {
    s.skewness = s.m3 / std::pow(s.m2, 1.5);
    s.kurtosis = s.m4 / (s.m2 * s.m2) - 3.0;
  }
  return s;
}

}  // namespace marl

#include <cstdio>
#include <fstream>
#include <sstream>

namespace marl {

namespace {
constexpr const char* kStatsHeader = "patient_id,week,mean,volume,skewness,kurtosis,m2,m3,m4";
}

void write_stats_csv(const std::filesystem::path& path, const std::vector<SliceStats>& rows) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io_error", path.string() + ": cannot open for writing");
  out << kStatsHeader << '\n';
  char buf[64];
  for (const auto& row : rows) {
    out << row.patient_id << ',' << row.week;
    for (double v : row.stats.as_array()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("io_error", path.string() + ": write failed");
}

std::vector<SliceStats> read_stats_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_file", path.string() + ": no such file");
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kStatsHeader) throw Error("malformed_csv", path.string() + ": unexpected header");
  std::vector<SliceStats> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) {
      throw Error("malformed_csv", path.string() + ":" + std::to_string(lineno) + ": expected 9 columns");
    }
    SliceStats row;
    row.patient_id = cells[0];
    try {
      row.week = std::stoi(cells[1]);
      double* fields[] = {&row.stats.mean, &row.stats.volume, &row.stats.skewness, &row.stats.kurtosis,
                          &row.stats.m2,   &row.stats.m3,     &row.stats.m4};
      for (std::size_t i = 0; i < 7; ++i) *fields[i] = std::stod(cells[i + 2]);
    } catch (const std::exception&) {
      throw Error("malformed_csv", path.string() + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace marl
