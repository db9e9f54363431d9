#pragma once

#include "marl/common.hpp"
#include "marl/features.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace marl {

enum class Sex { male, female };
enum class Smoking { smoker, ex_smoker, non_smoker };
enum class Severity { severe, mild, good };

std::string_view to_string(Sex sex);
std::string_view to_string(Smoking smoking);
std::string_view to_string(Severity severity);

/// One row of the clinical table.
struct PatientRecord {
  std::string patient_id;
  int week = 0;
  double fvc = 0.0;      // ml
  double percent = 0.0;  // % of the reference FVC
  int age = 0;
  Sex sex = Sex::male;
  Smoking smoking = Smoking::non_smoker;
};

struct RecordSet {
  std::vector<PatientRecord> records;  // sorted by (patient_id, week)
  std::vector<std::string> warnings;
};

class RecordError : public Error {
 public:
  using Error::Error;
};

/// Parses a CSV with header Patient,Weeks,FVC,Percent,Age,Sex,SmokingStatus.
/// Duplicate (patient, week) rows keep the first occurrence and add a warning.
RecordSet load_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<PatientRecord>& records);

/// FVC >= 2500 ml.
int binary_label(double fvc);
/// severe: percent < 60, mild: 60 <= percent < 80, good: percent >= 80.
Severity severity_class(double percent);

/// A clinical visit joined with the statistics of its slice.
struct EnrichedVisit {
  PatientRecord record;
  VisualStats stats;
};

/// Joins every record with the stats row of the same (patient, week). A visit
/// without its own slice takes the patient's slice nearest in time (earlier on
/// ties). A patient with no slice at all is an error.
std::vector<EnrichedVisit> join_stats(const std::vector<PatientRecord>& records,
                                      const std::vector<SliceStats>& stats);

// Encoded visit layout. Clinical FVC and percent are the label sources and are
// not part of the input.
inline constexpr int kVisitWidth = 14;
inline constexpr std::array<std::string_view, kVisitWidth> kVisitColumns = {
    "week", "age", "sex_male", "sex_female", "smoker", "ex_smoker", "non_smoker",
    "mean", "volume", "skewness", "kurtosis", "m2", "m3", "m4"};
inline constexpr std::size_t kNumericColumns = 9;
inline constexpr std::array<std::string_view, kNumericColumns> kNumericColumnNames = {
    "week", "age", "mean", "volume", "skewness", "kurtosis", "m2", "m3", "m4"};

/// Per-column z-score parameters (population standard deviation) for the
/// numeric inputs, fitted on the training split.
struct NormStats {
  std::array<double, kNumericColumns> mean{};
  std::array<double, kNumericColumns> stddev{};
};

std::array<double, kNumericColumns> numeric_columns(const EnrichedVisit& visit);

/// Throws "constant_column" when a column has zero spread.
NormStats fit_normalizer(const std::vector<EnrichedVisit>& training);

using EncodedVisit = Eigen::Matrix<double, kVisitWidth, 1>;

EncodedVisit encode_visit(const PatientRecord& record, const VisualStats& stats, const NormStats& norm);

/// One patient's visits in week order, with their encodings.
struct PatientHistory {
  std::string patient_id;
  std::vector<PatientRecord> records;
  std::vector<EncodedVisit> encoded;
};

/// Fixed-length LSTM input: the last t_max visits at the tail, zero rows in
/// front. Labels come from the final visit.
struct PatientSequence {
  std::string patient_id;
  MatrixXd visits;                   // t_max x kVisitWidth
  std::vector<bool> valid;           // t_max
  double label_fvc = 0.0;            // ml
  double label_percent = 0.0;
  int label_binary = 0;
  Severity label_class = Severity::good;
  int final_week = 0;

  Index length() const { return visits.rows(); }
  Index valid_count() const;
};

std::vector<PatientSequence> build_sequences(const std::vector<PatientHistory>& patients, int t_max);

/// Groups sorted enriched visits by patient and encodes them.
std::vector<PatientHistory> group_and_encode(const std::vector<EnrichedVisit>& visits, const NormStats& norm);

}  // namespace marl
