#pragma once

#include "marl/config.hpp"
#include "marl/features.hpp"
#include "marl/nn/model.hpp"
#include "marl/sequence_prep.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace marl {

enum class Split { train = 0, val = 1, test = 2 };
std::string_view to_string(Split s);

/// Patient-level split. `patient_ids` must be sorted and unique; the result is
/// parallel to it. Throws "empty_split" if a positive fraction receives no
/// patient.
std::vector<Split> split_patients(const std::vector<std::string>& patient_ids, const std::array<double, 3>& fractions,
                                  std::uint64_t seed);

/// Everything the network consumes, one entry per patient (sorted by id).
struct PreparedDataset {
  int t_max = 0;
  std::vector<PatientSequence> sequences;
  std::vector<ImageXd> images;  // exposure-corrected final-visit slice, in [0, 1]
  std::vector<Split> splits;
  NormStats norm;
  double label_mean = 0.0;  // FVC z-score parameters (training split)
  double label_std = 1.0;
  double window_low = 0.0, window_high = 1.0;
  std::array<double, 3> fractions{};
  std::uint64_t split_seed = 0;

  std::size_t size() const { return sequences.size(); }
  std::vector<std::size_t> indices(Split which) const;
};

/// Fetches the ingested slice of (patient_id, week).
using SliceSource = std::function<RawSlice(const std::string& patient_id, int week)>;

/// Joins records with slice stats, fits the normaliser on the training split,
/// encodes and pads every patient, and attaches the final-visit image.
PreparedDataset prepare_dataset(const RecordSet& records, const std::vector<SliceStats>& stats,
                                const SliceSource& slices, const PrepareConfig& prepare, const IngestConfig& ingest);

/// Prepared file pair: tensors.bin (float64 LE) and manifest.json. Returns the
/// manifest document, whose "tensor_hash" covers tensors.bin.
nlohmann::json write_prepared(const std::filesystem::path& dir, const PreparedDataset& data);
PreparedDataset read_prepared(const std::filesystem::path& dir);

/// Hex FNV-1a of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

// Directory-level stages shared by the CLI and the monolithic path.

struct StageLog {
  std::vector<std::string> warnings;
};

void run_ingest(const std::filesystem::path& in, const std::filesystem::path& out, const IngestConfig& config);
StageLog run_segment(const std::filesystem::path& in, const std::filesystem::path& out, const SegmentOptions& options);
void run_features(const std::filesystem::path& images, const std::filesystem::path& masks,
                  const std::filesystem::path& out_csv);
PreparedDataset run_prepare(const std::filesystem::path& records_csv, const std::filesystem::path& stats_csv,
                            const std::filesystem::path& images, const PrepareConfig& prepare);

/// The monolithic path: raw slices and records under `data_dir` (slices/,
/// records.csv) to a prepared dataset, entirely in memory.
PreparedDataset prepare_from_raw(const std::filesystem::path& data_dir, const Config& config, StageLog* log = nullptr);

/// Network inputs for one task. Regression targets are z-scored with the
/// dataset's label parameters.
std::vector<nn::Sample> make_samples(const PreparedDataset& data, nn::Task task);

}  // namespace marl
