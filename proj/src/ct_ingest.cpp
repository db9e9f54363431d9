#include "marl/ct_ingest.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <cmath>
#include <fstream>
#include <iterator>

namespace marl {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "slice files are stored little-endian; big-endian hosts need byte swapping");

namespace {

fs::path stem_of(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".raw" || ext == ".json") {
    fs::path stem = path;
    stem.replace_extension();
    return stem;
  }
  return path;
}

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  return fs::path(stem.string() + suffix);
}

template <typename T>
T sidecar_field(const json& doc, const char* key, const fs::path& file) {
  auto it = doc.find(key);
  if (it == doc.end()) {
    throw IngestError("malformed_sidecar", file.string() + ": missing key '" + key + "'");
  }
  if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) {
      throw IngestError("malformed_sidecar", file.string() + ": '" + key + "' must be a string");
    }
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) {
      throw IngestError("malformed_sidecar", file.string() + ": '" + key + "' must be an integer");
    }
  } else {
    if (!it->is_number()) {
      throw IngestError("malformed_sidecar", file.string() + ": '" + key + "' must be a number");
    }
  }
  return it->get<T>();
}

}  // namespace

RawSlice load_slice(const fs::path& path) {
  const fs::path stem = stem_of(path);
  const fs::path raw_path = with_suffix(stem, ".raw");
  const fs::path json_path = with_suffix(stem, ".json");
  for (const auto& p : {raw_path, json_path}) {
    if (!fs::exists(p)) throw IngestError("missing_file", p.string() + ": no such file");
  }

  json doc;
  {
    std::ifstream in(json_path);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw IngestError("malformed_sidecar", json_path.string() + ": " + e.what());
    }
  }
  if (!doc.is_object()) {
    throw IngestError("malformed_sidecar", json_path.string() + ": sidecar must be a JSON object");
  }

  RawSlice slice;
  slice.width = sidecar_field<int>(doc, "width", json_path);
  slice.height = sidecar_field<int>(doc, "height", json_path);
  slice.rescale_slope = sidecar_field<double>(doc, "rescale_slope", json_path);
  slice.rescale_intercept = sidecar_field<double>(doc, "rescale_intercept", json_path);
  slice.patient_id = sidecar_field<std::string>(doc, "patient_id", json_path);
  slice.week = sidecar_field<int>(doc, "week", json_path);
  if (slice.width <= 0 || slice.height <= 0) {
    throw IngestError("malformed_sidecar", json_path.string() + ": width and height must be positive");
  }

  std::ifstream in(raw_path, std::ios::binary);
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::size_t expected = static_cast<std::size_t>(slice.width) * slice.height;
  if (bytes.size() != expected * sizeof(std::int16_t)) {
    throw IngestError("pixel_count_mismatch",
                      raw_path.string() + ": sidecar declares " + std::to_string(expected) +
                          " pixels, file holds " + std::to_string(bytes.size() / 2) +
                          (bytes.size() % 2 ? ".5" : ""));
  }
  slice.pixels.resize(expected);
  std::memcpy(slice.pixels.data(), bytes.data(), bytes.size());
  return slice;
}

void write_slice(const fs::path& stem_path, const RawSlice& slice) {
  const fs::path stem = stem_of(stem_path);
  if (slice.pixels.size() != static_cast<std::size_t>(slice.width) * slice.height) {
    throw IngestError("pixel_count_mismatch", stem.string() + ": pixel buffer does not match dimensions");
  }
  if (!stem.parent_path().empty()) fs::create_directories(stem.parent_path());
  {
    std::ofstream out(with_suffix(stem, ".raw"), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(slice.pixels.data()),
              static_cast<std::streamsize>(slice.pixels.size() * sizeof(std::int16_t)));
    if (!out) throw Error("io_error", stem.string() + ".raw: write failed");
  }
  json doc = {{"width", slice.width},
              {"height", slice.height},
              {"rescale_slope", slice.rescale_slope},
              {"rescale_intercept", slice.rescale_intercept},
              {"patient_id", slice.patient_id},
              {"week", slice.week}};
  std::ofstream out(with_suffix(stem, ".json"), std::ios::trunc);
  out << doc.dump(2) << '\n';
  if (!out) throw Error("io_error", stem.string() + ".json: write failed");
}

std::vector<fs::path> list_slices(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestError("missing_file", dir.string() + ": not a directory");
  std::vector<fs::path> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    fs::path stem = entry.path();
    stem.replace_extension();
    if (fs::exists(with_suffix(stem, ".raw"))) stems.push_back(stem);
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

HuImage to_hounsfield(const RawSlice& slice) {
  HuImage img;
  img.values.resize(slice.height, slice.width);
  double* out = img.values.data();
  for (std::size_t i = 0; i < slice.pixels.size(); ++i) {
    const double hu = slice.pixels[i] * slice.rescale_slope + slice.rescale_intercept;
    out[i] = std::clamp(hu, kHuMin, kHuMax);
  }
  return img;
}

HuImage correct_exposure(const HuImage& img, double window_low, double window_high) {
  if (!(window_low < window_high)) {
    throw Error("degenerate_window", "exposure window requires low < high");
  }
  const double span = window_high - window_low;
  HuImage out;
  out.values = ((img.values.array() - window_low) / span).cwiseMax(0.0).cwiseMin(1.0).matrix();
  return out;
}

namespace {

struct Tap {
  Index lo, hi;
  double frac;  // weight of hi
};

std::vector<Tap> axis_taps(Index in, Index out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  for (Index i = 0; i < out; ++i) {
    const double src = out == 1 ? 0.5 * static_cast<double>(in - 1)
                                : static_cast<double>(i) * static_cast<double>(in - 1) /
                                      static_cast<double>(out - 1);
    const Index lo = std::min<Index>(static_cast<Index>(std::floor(src)), in - 1);
    const Index hi = std::min<Index>(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

HuImage resize_to(const HuImage& img, int target_width, int target_height) {
  if (target_width <= 0 || target_height <= 0) {
    throw Error("invalid_size", "resize target dimensions must be positive");
  }
  if (target_width == img.width() && target_height == img.height()) return img;

  const auto xs = axis_taps(img.width(), target_width);
  const auto ys = axis_taps(img.height(), target_height);
  HuImage out;
  out.values.resize(target_height, target_width);
  for (int r = 0; r < target_height; ++r) {
    const Tap& ty = ys[static_cast<std::size_t>(r)];
    for (int c = 0; c < target_width; ++c) {
      const Tap& tx = xs[static_cast<std::size_t>(c)];
      const double top = img.values(ty.lo, tx.lo) + tx.frac * (img.values(ty.lo, tx.hi) - img.values(ty.lo, tx.lo));
      const double bottom = img.values(ty.hi, tx.lo) + tx.frac * (img.values(ty.hi, tx.hi) - img.values(ty.hi, tx.lo));
      out.values(r, c) = top + ty.frac * (bottom - top);
    }
  }
  return out;
}

RawSlice ingest_slice(const RawSlice& slice, int target_size) {
  const HuImage resized = resize_to(to_hounsfield(slice), target_size, target_size);
  RawSlice out;
  out.width = target_size;
  out.height = target_size;
  out.rescale_slope = 1.0;
  out.rescale_intercept = 0.0;
  out.patient_id = slice.patient_id;
  out.week = slice.week;
  out.pixels.resize(static_cast<std::size_t>(resized.size()));
  const double* src = resized.values.data();
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = static_cast<std::int16_t>(std::lround(src[i]));
  }
  return out;
}

}  // namespace marl
