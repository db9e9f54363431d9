#pragma once

#include "marl/config.hpp"
#include "marl/ct_ingest.hpp"
#include "marl/mask.hpp"
#include "marl/sequence_prep.hpp"

#include <filesystem>
#include <random>
#include <vector>

namespace marl {

/// Axial chest phantom: an elliptical body on air with two elliptical lungs
/// placed symmetrically about the vertical midline.
struct PhantomGeometry {
  int size = 128;
  double body_ax = 54.0, body_ay = 44.0;
  double lung_ax = 12.0, lung_ay = 20.0;
  double lung_offset = 22.0;  // horizontal distance of each lung centre from the midline
  double hu_air = -1000.0;
  double hu_body = 40.0;
  double hu_lung = -500.0;
};

struct Phantom {
  HuImage image;  // not quantised
  LungMask lungs;  // ground truth: pixel centres inside a lung ellipse
  LungMask body;
};

Phantom make_phantom(const PhantomGeometry& geometry, double noise_sigma, std::mt19937_64& rng);

/// Ground-truth generative features of one visit.
struct TruthRow {
  std::string patient_id;
  int week = 0;
  double lung_area = 0.0;
  double body_area = 0.0;
  int age = 0;
  Sex sex = Sex::male;
  Smoking smoking = Smoking::non_smoker;
  double fvc = 0.0;
  double percent = 0.0;
};

struct SynthDataset {
  std::vector<RawSlice> slices;   // one per visit
  std::vector<LungMask> masks;    // ground truth, parallel to slices
  std::vector<PatientRecord> records;
  std::vector<TruthRow> truth;
};

SynthDataset synth_generate(const SynthSpec& spec);

/// Slice file stem used on disk, e.g. "P007_w+012".
std::string slice_stem(const std::string& patient_id, int week);

/// Writes slices/ (slice pairs), masks/ (ground-truth PGMs), records.csv and
/// truth.csv under `dir`.
void write_dataset(const SynthDataset& data, const std::filesystem::path& dir);

std::vector<TruthRow> read_truth_csv(const std::filesystem::path& path);

}  // namespace marl
