#include "marl/mask.hpp"

#include <algorithm>
#include <fstream>
#include <string>

namespace marl {

namespace fs = std::filesystem;

namespace {

void check_radius(int radius) {
  if (radius < 1) throw Error("invalid_radius", "morphology radius must be >= 1");
}

// Separable min/max filter: a square element decomposes into a row pass and a
// column pass.
template <bool Dilate>
LungMask square_filter(const LungMask& mask, int radius) {
  const int w = mask.width();
  const int h = mask.height();
  LungMask rows(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      bool acc = !Dilate;
      for (int dc = -radius; dc <= radius; ++dc) {
        const int cc = c + dc;
        const bool v = (cc >= 0 && cc < w) ? mask.bits(r, cc) : false;
        acc = Dilate ? (acc || v) : (acc && v);
      }
      rows.bits(r, c) = acc;
    }
  }
  LungMask out(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      bool acc = !Dilate;
      for (int dr = -radius; dr <= radius; ++dr) {
        const int rr = r + dr;
        const bool v = (rr >= 0 && rr < h) ? rows.bits(rr, c) : false;
        acc = Dilate ? (acc || v) : (acc && v);
      }
      out.bits(r, c) = acc;
    }
  }
  return out;
}

}  // namespace

LungMask erode(const LungMask& mask, int radius) {
  check_radius(radius);
  return square_filter<false>(mask, radius);
}

LungMask dilate(const LungMask& mask, int radius) {
  check_radius(radius);
  return square_filter<true>(mask, radius);
}

double dice(const LungMask& a, const LungMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error("dimension_mismatch", "dice requires masks of equal size");
  }
  const Index total = a.count() + b.count();
  if (total == 0) return 1.0;
  const Index both = (a.bits && b.bits).count();
  return 2.0 * static_cast<double>(both) / static_cast<double>(total);
}

void write_pgm(const fs::path& path, const LungMask& mask) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P5\n" << mask.width() << ' ' << mask.height() << "\n255\n";
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) out.put(mask.bits(r, c) ? char(255) : char(0));
  }
  if (!out) throw Error("io_error", path.string() + ": write failed");
}

LungMask read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", path.string() + ": no such file");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) {
    throw Error("malformed_mask", path.string() + ": expected an 8-bit binary PGM");
  }
  in.get();
  LungMask mask(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int v = in.get();
      if (v == EOF) throw Error("malformed_mask", path.string() + ": truncated pixel data");
      mask.bits(r, c) = v >= 128;
    }
  }
  return mask;
}

}  // namespace marl
