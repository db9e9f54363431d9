#pragma once

#include "marl/ct_ingest.hpp"
#include "marl/mask.hpp"

#include <array>

namespace marl {

/// Statistics of the masked (lung) pixels of one slice. Moments are central
/// population moments; kurtosis is excess kurtosis (a Gaussian gives 0).
/// Volume is the 2-D masked pixel count.
struct VisualStats {
  double mean = 0.0;
  double volume = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;

  static constexpr std::size_t kFieldCount = 7;
  std::array<double, kFieldCount> as_array() const { return {mean, volume, skewness, kurtosis, m2, m3, m4}; }
};

/// Empty masks give all-zero stats; zero variance gives zero skewness and
/// kurtosis.
VisualStats extract_stats(const HuImage& img, const LungMask& mask);

}  // namespace marl

#include <filesystem>
#include <string>
#include <vector>

namespace marl {

/// One row of the stats table: which slice, and its statistics.
struct SliceStats {
  std::string patient_id;
  int week = 0;
  VisualStats stats;
};

/// Columns: patient_id, week, mean, volume, skewness, kurtosis, m2, m3, m4.
/// Reals are written with 17 significant digits so a read returns the same
/// bits.
void write_stats_csv(const std::filesystem::path& path, const std::vector<SliceStats>& rows);
std::vector<SliceStats> read_stats_csv(const std::filesystem::path& path);

}  // namespace marl
