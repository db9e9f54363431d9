#include "marl/sequence_prep.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace marl {

namespace fs = std::filesystem;

std::string_view to_string(Sex sex) { return sex == Sex::male ? "Male" : "Female"; }

std::string_view to_string(Smoking smoking) {
  switch (smoking) {
    case Smoking::smoker: return "Currently smokes";
    case Smoking::ex_smoker: return "Ex-smoker";
    case Smoking::non_smoker: return "Never smoked";
  }
  return "";
}

std::string_view to_string(Severity severity) {
  switch (severity) {
    case Severity::severe: return "severe";
    case Severity::mild: return "mild";
    case Severity::good: return "good";
  }
  return "";
}

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

std::string where(const fs::path& path, int row) { return path.string() + ": row " + std::to_string(row); }

template <typename T>
T parse_number(const std::string& text, const fs::path& path, int row, const char* column) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw RecordError("non_numeric", where(path, row) + ": column " + column + " is not numeric: '" + text + "'");
  }
  return value;
}

Sex parse_sex(const std::string& text, const fs::path& path, int row) {
  const auto t = lower(text);
  if (t == "male") return Sex::male;
  if (t == "female") return Sex::female;
  throw RecordError("unknown_enum", where(path, row) + ": unknown Sex '" + text + "'");
}

Smoking parse_smoking(const std::string& text, const fs::path& path, int row) {
  const auto t = lower(text);
  if (t == "currently smokes" || t == "smoker") return Smoking::smoker;
  if (t == "ex-smoker" || t == "ex smoker") return Smoking::ex_smoker;
  if (t == "never smoked" || t == "non-smoker" || t == "non smoker") return Smoking::non_smoker;
  throw RecordError("unknown_enum", where(path, row) + ": unknown SmokingStatus '" + text + "'");
}

}  // namespace

RecordSet load_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RecordError("missing_file", path.string() + ": no such file");
  std::string line;
  if (!std::getline(in, line)) throw RecordError("bad_header", path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> expected = {"Patient", "Weeks", "FVC", "Percent", "Age", "Sex", "SmokingStatus"};
  if (split_csv(line) != expected) {
    throw RecordError("bad_header", path.string() + ": header must be Patient,Weeks,FVC,Percent,Age,Sex,SmokingStatus");
  }

  RecordSet out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != expected.size()) {
      throw RecordError("bad_row", where(path, row) + ": expected 7 columns, got " + std::to_string(cells.size()));
    }
    PatientRecord rec;
    rec.patient_id = cells[0];
    rec.week = parse_number<int>(cells[1], path, row, "Weeks");
    rec.fvc = parse_number<double>(cells[2], path, row, "FVC");
    rec.percent = parse_number<double>(cells[3], path, row, "Percent");
    rec.age = parse_number<int>(cells[4], path, row, "Age");
    rec.sex = parse_sex(cells[5], path, row);
    rec.smoking = parse_smoking(cells[6], path, row);
    if (rec.patient_id.empty()) throw RecordError("invalid_value", where(path, row) + ": empty Patient");
    if (!(rec.fvc > 0) || !(rec.percent > 0) || rec.age <= 0) {
      throw RecordError("invalid_value", where(path, row) + ": FVC, Percent and Age must be positive");
    }
    out.records.push_back(std::move(rec));
  }

  // Stable sort keeps file order among duplicates, so "first" means first in
  // the file.
  std::stable_sort(out.records.begin(), out.records.end(), [](const PatientRecord& a, const PatientRecord& b) {
    return std::tie(a.patient_id, a.week) < std::tie(b.patient_id, b.week);
  });
  std::vector<PatientRecord> unique;
  unique.reserve(out.records.size());
  for (auto& rec : out.records) {
    if (!unique.empty() && unique.back().patient_id == rec.patient_id && unique.back().week == rec.week) {
      out.warnings.push_back("duplicate row for patient " + rec.patient_id + " week " + std::to_string(rec.week) +
                             "; keeping the first");
      continue;
    }
    unique.push_back(std::move(rec));
  }
  out.records = std::move(unique);
  return out;
}

void write_records(const fs::path& path, const std::vector<PatientRecord>& records) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io_error", path.string() + ": cannot open for writing");
  out << "Patient,Weeks,FVC,Percent,Age,Sex,SmokingStatus\n";
  char buf[64];
  for (const auto& r : records) {
    out << r.patient_id << ',' << r.week << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.fvc);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.percent);
    out << buf << ',' << r.age << ',' << to_string(r.sex) << ',' << to_string(r.smoking) << '\n';
  }
  if (!out) throw Error("io_error", path.string() + ": write failed");
}

int binary_label(double fvc) { return fvc >= 2500.0 ? 1 : 0; }

Severity severity_class(double percent) {
  if (percent < 60.0) return Severity::severe;
  if (percent < 80.0) return Severity::mild;
  return Severity::good;
}

std::vector<EnrichedVisit> join_stats(const std::vector<PatientRecord>& records, const std::vector<SliceStats>& stats) {
  std::map<std::string, std::vector<const SliceStats*>> by_patient;
  for (const auto& s : stats) by_patient[s.patient_id].push_back(&s);
  for (auto& [id, rows] : by_patient) {
    std::stable_sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->week < b->week; });
  }

  std::vector<EnrichedVisit> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    auto it = by_patient.find(rec.patient_id);
    if (it == by_patient.end()) {
      throw Error("missing_slice", "no slice statistics for patient " + rec.patient_id);
    }
    const SliceStats* best = nullptr;
    for (const SliceStats* s : it->second) {
      if (!best || std::abs(s->week - rec.week) < std::abs(best->week - rec.week)) best = s;
    }
    out.push_back({rec, best->stats});
  }
  return out;
}

std::array<double, kNumericColumns> numeric_columns(const EnrichedVisit& visit) {
  const auto s = visit.stats.as_array();
  return {static_cast<double>(visit.record.week), static_cast<double>(visit.record.age), s[0], s[1], s[2], s[3],
          s[4], s[5], s[6]};
}

NormStats fit_normalizer(const std::vector<EnrichedVisit>& training) {
  if (training.empty()) throw Error("empty_split", "cannot fit a normalizer on an empty training split");
  NormStats norm;
  const double n = static_cast<double>(training.size());
  for (std::size_t col = 0; col < kNumericColumns; ++col) {
    double sum = 0.0;
    for (const auto& v : training) sum += numeric_columns(v)[col];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& v : training) {
      const double d = numeric_columns(v)[col] - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0)) {
      throw Error("constant_column", "column '" + std::string(kNumericColumnNames[col]) + "' is constant in the training split");
    }
    norm.mean[col] = mean;
    norm.stddev[col] = sd;
  }
  return norm;
}

EncodedVisit encode_visit(const PatientRecord& record, const VisualStats& stats, const NormStats& norm) {
  const auto numeric = numeric_columns({record, stats});
  auto z = [&](std::size_t col) { return (numeric[col] - norm.mean[col]) / norm.stddev[col]; };
  EncodedVisit e;
  e << z(0), z(1),                                                       //
      record.sex == Sex::male ? 1.0 : 0.0, record.sex == Sex::female ? 1.0 : 0.0,  //
      record.smoking == Smoking::smoker ? 1.0 : 0.0, record.smoking == Smoking::ex_smoker ? 1.0 : 0.0,
      record.smoking == Smoking::non_smoker ? 1.0 : 0.0,  //
      z(2), z(3), z(4), z(5), z(6), z(7), z(8);
  return e;
}

Index PatientSequence::valid_count() const {
  return static_cast<Index>(std::count(valid.begin(), valid.end(), true));
}

std::vector<PatientSequence> build_sequences(const std::vector<PatientHistory>& patients, int t_max) {
  if (t_max < 1) throw Error("invalid_length", "t_max must be >= 1");
  std::vector<PatientSequence> out;
  out.reserve(patients.size());
  for (const auto& p : patients) {
    if (p.encoded.empty() || p.records.size() != p.encoded.size()) {
      throw Error("empty_patient", "patient " + p.patient_id + " has no visits");
    }
    PatientSequence seq;
    seq.patient_id = p.patient_id;
    seq.visits = MatrixXd::Zero(t_max, kVisitWidth);
    seq.valid.assign(static_cast<std::size_t>(t_max), false);
    const auto n = static_cast<int>(p.encoded.size());
    const int kept = std::min(n, t_max);
    for (int k = 0; k < kept; ++k) {
      const int src = n - kept + k;
      const int dst = t_max - kept + k;
      seq.visits.row(dst) = p.encoded[static_cast<std::size_t>(src)].transpose();
      seq.valid[static_cast<std::size_t>(dst)] = true;
    }
    const PatientRecord& last = p.records.back();
    seq.label_fvc = last.fvc;
    seq.label_percent = last.percent;
    seq.label_binary = binary_label(last.fvc);
    seq.label_class = severity_class(last.percent);
    seq.final_week = last.week;
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<PatientHistory> group_and_encode(const std::vector<EnrichedVisit>& visits, const NormStats& norm) {
  std::vector<PatientHistory> out;
  for (const auto& v : visits) {
    if (out.empty() || out.back().patient_id != v.record.patient_id) {
      out.push_back({v.record.patient_id, {}, {}});
    }
    out.back().records.push_back(v.record);
    out.back().encoded.push_back(encode_visit(v.record, v.stats, norm));
  }
  return out;
}

}  // namespace marl
