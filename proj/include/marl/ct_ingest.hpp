#pragma once

#include "marl/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace marl {

/// Row-major image grid: rows = height, cols = width.
template <typename Scalar>
using Image = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ImageXd = Image<double>;

inline constexpr double kHuMin = -1024.0;
inline constexpr double kHuMax = 3071.0;

/// A stored CT slice: raw detector values plus the rescale metadata needed to
/// project them onto the Hounsfield scale.
struct RawSlice {
  int width = 0;
  int height = 0;
  std::vector<std::int16_t> pixels;  // row-major, width * height entries
  double rescale_slope = 1.0;
  double rescale_intercept = 0.0;
  std::string patient_id;
  int week = 0;
};

/// Image in Hounsfield units (or, after correct_exposure, in [0, 1]).
struct HuImage {
  ImageXd values;

  int width() const { return static_cast<int>(values.cols()); }
  int height() const { return static_cast<int>(values.rows()); }
  Index size() const { return values.size(); }
};

class IngestError : public Error {
 public:
  using Error::Error;
};

/// Reads `<stem>.raw` (int16 little-endian) and `<stem>.json`. `path` may name
/// either file or the bare stem.
RawSlice load_slice(const std::filesystem::path& path);

/// Writes the `.raw` / `.json` pair for `slice` next to `stem`.
void write_slice(const std::filesystem::path& stem, const RawSlice& slice);

/// Lists slice stems (sorted) in a directory: every `<stem>.json` that has a
/// matching `<stem>.raw`.
std::vector<std::filesystem::path> list_slices(const std::filesystem::path& dir);

/// hu = pixel * slope + intercept, clamped to [-1024, 3071].
HuImage to_hounsfield(const RawSlice& slice);

/// Linear map of [window_low, window_high] onto [0, 1], clipped outside.
HuImage correct_exposure(const HuImage& img, double window_low, double window_high);

/// Bilinear resampling with corner-aligned grids. A same-size request returns
/// a copy of the input.
HuImage resize_to(const HuImage& img, int target_width, int target_height);

/// The ingest stage for one slice: HU projection, resize, and requantisation
/// to integer HU (slope 1, intercept 0) so the result is itself a RawSlice.
RawSlice ingest_slice(const RawSlice& slice, int target_size);

}  // namespace marl
