#pragma once

#include "marl/common.hpp"

#include <filesystem>

namespace marl {

/// Binary mask, rows = height, cols = width.
struct LungMask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> bits;

  LungMask() = default;
  LungMask(int width, int height) : bits(height, width) { bits.setConstant(false); }

  int width() const { return static_cast<int>(bits.cols()); }
  int height() const { return static_cast<int>(bits.rows()); }
  Index count() const { return bits.count(); }
  bool empty() const { return count() == 0; }

  friend bool operator==(const LungMask& a, const LungMask& b) {
    return a.bits.rows() == b.bits.rows() && a.bits.cols() == b.bits.cols() && (a.bits == b.bits).all();
  }
};

// Square structuring element of half-width `radius`. Pixels outside the image
// count as background, so erosion eats into the border.
LungMask erode(const LungMask& mask, int radius);
LungMask dilate(const LungMask& mask, int radius);

/// 2|a ∩ b| / (|a| + |b|); 1 when both are empty.
double dice(const LungMask& a, const LungMask& b);

/// Binary PGM (P5), 0 / 255.
void write_pgm(const std::filesystem::path& path, const LungMask& mask);
LungMask read_pgm(const std::filesystem::path& path);

}  // namespace marl
