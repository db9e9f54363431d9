#include "marl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace marl {

namespace fs = std::filesystem;

Phantom make_phantom(const PhantomGeometry& g, double noise_sigma, std::mt19937_64& rng) {
  Phantom p;
  p.image.values.resize(g.size, g.size);
  p.lungs = LungMask(g.size, g.size);
  p.body = LungMask(g.size, g.size);
  const double centre = 0.5 * (g.size - 1);
  auto inside = [](double dx, double dy, double ax, double ay) {
    return (dx / ax) * (dx / ax) + (dy / ay) * (dy / ay) <= 1.0;
  };
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
  for (int r = 0; r < g.size; ++r) {
    const double dy = r - centre;
    for (int c = 0; c < g.size; ++c) {
      const double dx = c - centre;
      const bool body = inside(dx, dy, g.body_ax, g.body_ay);
      const bool lung = inside(dx - g.lung_offset, dy, g.lung_ax, g.lung_ay) ||
                        inside(dx + g.lung_offset, dy, g.lung_ax, g.lung_ay);
      p.body.bits(r, c) = body;
      p.lungs.bits(r, c) = lung && body;
      double hu = lung && body ? g.hu_lung : (body ? g.hu_body : g.hu_air);
      if (noise_sigma > 0) hu += noise(rng);
      p.image.values(r, c) = hu;
    }
  }
  return p;
}

std::string slice_stem(const std::string& patient_id, int week) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_w%+04d", week);
  return patient_id + buf;
}

SynthDataset synth_generate(const SynthSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform_int = [&](int lo, int hi) {
    return lo + static_cast<int>(std::floor(unit(rng) * (hi - lo + 1)));
  };

  SynthDataset data;
  const double scale = spec.image_size / 128.0;
  for (int p = 0; p < spec.n_patients; ++p) {
    char id[16];
    std::snprintf(id, sizeof id, "P%03d", p);
    const int age = uniform_int(50, 85);
    const Sex sex = unit(rng) < 0.7 ? Sex::male : Sex::female;
    const double smoke_draw = unit(rng);
    const Smoking smoking = smoke_draw < 0.15 ? Smoking::smoker : (smoke_draw < 0.65 ? Smoking::ex_smoker : Smoking::non_smoker);
    const double body_scale = unit(rng);
    const double lung_scale0 = 0.3 + 0.7 * unit(rng);
    const double decline = 0.08 + (smoking == Smoking::smoker ? 0.12 : smoking == Smoking::ex_smoker ? 0.06 : 0.0) +
                           0.08 * unit(rng);
    const int visits = uniform_int(spec.visits_min, spec.visits_max);

    PhantomGeometry geom;
    geom.size = spec.image_size;
    geom.body_ax = (46.0 + 14.0 * body_scale) * scale;
    geom.body_ay = (38.0 + 12.0 * body_scale) * scale;
    geom.lung_offset = 22.0 * scale;

    const double body_area = std::numbers::pi * geom.body_ax * geom.body_ay;
    const double ref = (sex == Sex::male ? spec.ref_male : spec.ref_female) + spec.ref_age_coef * (age - 65) +
                       spec.ref_body_coef * (body_area - spec.ref_body_area);
    int week = uniform_int(-4, 4);
    const int first_week = week;
    for (int v = 0; v < visits; ++v) {
      if (v > 0) week += uniform_int(4, 16);
      const double s = std::clamp(lung_scale0 - decline * (week - first_week) / 52.0, 0.05, 1.0);
      geom.lung_ax = (8.0 + 8.0 * s) * scale;
      geom.lung_ay = (14.0 + 12.0 * s) * scale;
      const Phantom ph = make_phantom(geom, spec.noise_sigma, rng);

      RawSlice slice;
      slice.width = slice.height = spec.image_size;
      slice.rescale_slope = 1.0;
      slice.rescale_intercept = -1024.0;
      slice.patient_id = id;
      slice.week = week;
      slice.pixels.resize(static_cast<std::size_t>(ph.image.size()));
      for (std::size_t i = 0; i < slice.pixels.size(); ++i) {
        const double stored = std::round(ph.image.values.data()[i]) + 1024.0;
        slice.pixels[i] = static_cast<std::int16_t>(std::clamp(stored, -32768.0, 32767.0));
      }

      TruthRow t;
      t.patient_id = id;
      t.week = week;
      t.lung_area = static_cast<double>(ph.lungs.count());
      t.body_area = static_cast<double>(ph.body.count());
      t.age = age;
      t.sex = sex;
      t.smoking = smoking;
      t.fvc = spec.fvc_intercept + spec.fvc_lung_coef * t.lung_area + spec.fvc_body_coef * t.body_area +
              spec.fvc_age_coef * age + (sex == Sex::female ? spec.fvc_female : 0.0) +
              (smoking == Smoking::smoker ? spec.fvc_smoker : smoking == Smoking::ex_smoker ? spec.fvc_ex_smoker : 0.0) +
              spec.fvc_noise * (2.0 * unit(rng) - 1.0);
      t.fvc = std::max(t.fvc, 200.0);
      t.percent = 100.0 * t.fvc / ref;

      data.records.push_back({id, week, t.fvc, t.percent, age, sex, smoking});
      data.slices.push_back(std::move(slice));
      data.masks.push_back(ph.lungs);
      data.truth.push_back(std::move(t));
    }
  }
  return data;
}

void write_dataset(const SynthDataset& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "slices", ec);
  fs::create_directories(dir / "masks", ec);
  if (ec || !fs::is_directory(dir / "slices")) {
    throw Error("io_error", dir.string() + ": output directory is not writable");
  }
  for (std::size_t i = 0; i < data.slices.size(); ++i) {
    const auto stem = slice_stem(data.slices[i].patient_id, data.slices[i].week);
    write_slice(dir / "slices" / stem, data.slices[i]);
    write_pgm(dir / "masks" / (stem + ".pgm"), data.masks[i]);
  }
  write_records(dir / "records.csv", data.records);

  std::ofstream out(dir / "truth.csv", std::ios::trunc);
  if (!out) throw Error("io_error", (dir / "truth.csv").string() + ": cannot open for writing");
  out << "patient_id,week,lung_area,body_area,age,sex,smoking,fvc,percent\n";
  char buf[160];
  for (const auto& t : data.truth) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.17g,%.17g,%d,%d,%d,%.17g,%.17g\n", t.patient_id.c_str(), t.week,
                  t.lung_area, t.body_area, t.age, static_cast<int>(t.sex), static_cast<int>(t.smoking), t.fvc,
                  t.percent);
    out << buf;
  }
}

std::vector<TruthRow> read_truth_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_file", path.string() + ": no such file");
  std::string line;
  std::getline(in, line);
  std::vector<TruthRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> c;
    while (std::getline(ss, cell, ',')) c.push_back(cell);
    if (c.size() != 9) throw Error("malformed_csv", path.string() + ": expected 9 columns");
    TruthRow t;
    t.patient_id = c[0];
    t.week = std::stoi(c[1]);
    t.lung_area = std::stod(c[2]);
    t.body_area = std::stod(c[3]);
    t.age = std::stoi(c[4]);
    t.sex = static_cast<Sex>(std::stoi(c[5]));
    t.smoking = static_cast<Smoking>(std::stoi(c[6]));
    t.fvc = std::stod(c[7]);
    t.percent = std::stod(c[8]);
    rows.push_back(std::move(t));
  }
  return rows;
}

}  // namespace marl
