#include "marl/pipeline.hpp"

#include "marl/fuzzy_seg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstring>
#include <iterator>
#include <map>
#include <random>

namespace marl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "";
}

std::vector<Split> split_patients(const std::vector<std::string>& ids, const std::array<double, 3>& fractions,
                                  std::uint64_t seed) {
  validate_split(fractions);
  const std::size_t n = ids.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n) + 1e-9));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n) + 1e-9)));
  const std::size_t n_test = n - n_train - n_val;
  const std::array<std::size_t, 3> counts = {n_train, n_val, fractions[2] > 0.0 ? n_test : 0};
  for (int s = 0; s < 3; ++s) {
    if (fractions[static_cast<std::size_t>(s)] > 0.0 && counts[static_cast<std::size_t>(s)] == 0) {
      throw Error("empty_split", "split '" + std::string(to_string(static_cast<Split>(s))) + "' would be empty");
    }
  }

  std::vector<Split> out(n, Split::train);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    if (k < n_train) out[i] = Split::train;
    else if (k < n_train + n_val) out[i] = Split::val;
    else out[i] = fractions[2] > 0.0 ? Split::test : Split::train;
  }
  return out;
}

std::vector<std::size_t> PreparedDataset::indices(Split which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == which) out.push_back(i);
  }
  return out;
}

PreparedDataset prepare_dataset(const RecordSet& records, const std::vector<SliceStats>& stats,
                                const SliceSource& slices, const PrepareConfig& prepare, const IngestConfig& ingest) {
  if (records.records.empty()) throw Error("empty_dataset", "no patient records");
  PreparedDataset data;
  data.t_max = prepare.t_max;
  data.fractions = prepare.split;
  data.split_seed = prepare.seed;
  data.window_low = ingest.window_low;
  data.window_high = ingest.window_high;

  std::vector<std::string> ids;
  for (const auto& r : records.records) {
    if (ids.empty() || ids.back() != r.patient_id) ids.push_back(r.patient_id);
  }
  data.splits = split_patients(ids, prepare.split, prepare.seed);
  std::map<std::string, Split> split_of;
  for (std::size_t i = 0; i < ids.size(); ++i) split_of[ids[i]] = data.splits[i];

  const auto enriched = join_stats(records.records, stats);
  std::vector<EnrichedVisit> training;
  for (const auto& v : enriched) {
    if (split_of.at(v.record.patient_id) == Split::train) training.push_back(v);
  }
  data.norm = fit_normalizer(training);
  const auto histories = group_and_encode(enriched, data.norm);
  data.sequences = build_sequences(histories, prepare.t_max);

  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    if (data.splits[i] != Split::train) continue;
    sum += data.sequences[i].label_fvc;
    count += 1.0;
  }
  data.label_mean = sum / count;
  double ss = 0.0;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    if (data.splits[i] != Split::train) continue;
    const double d = data.sequences[i].label_fvc - data.label_mean;
    ss += d * d;
  }
  data.label_std = std::sqrt(ss / count);
  if (!(data.label_std > 0.0)) throw Error("constant_column", "training FVC labels are constant");

  std::map<std::string, std::vector<int>> weeks;
  for (const auto& s : stats) weeks[s.patient_id].push_back(s.week);
  data.images.resize(data.sequences.size());
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    const auto& seq = data.sequences[i];
    const auto& available = weeks.at(seq.patient_id);
    int best = available.front();
    for (int w : available) {
      if (std::abs(w - seq.final_week) < std::abs(best - seq.final_week) ||
          (std::abs(w - seq.final_week) == std::abs(best - seq.final_week) && w < best)) {
        best = w;
      }
    }
    const HuImage img = correct_exposure(to_hounsfield(slices(seq.patient_id, best)), ingest.window_low, ingest.window_high);
    if (i > 0 && (img.values.rows() != data.images[0].rows() || img.values.cols() != data.images[0].cols())) {
      throw Error("shape_mismatch", "slice for patient " + seq.patient_id + " has a different size");
    }
    data.images[i] = img.values;
  }
  return data;
}

// ---------------------------------------------------------------------------

namespace {

void put(std::vector<double>& buf, double v) { buf.push_back(v); }

}  // namespace

json write_prepared(const fs::path& dir, const PreparedDataset& data) {
  fs::create_directories(dir);
  std::vector<double> buf;
  json patients = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.sequences[i];
    for (Index r = 0; r < s.visits.rows(); ++r) {
      for (Index c = 0; c < s.visits.cols(); ++c) put(buf, s.visits(r, c));
    }
    for (bool v : s.valid) put(buf, v ? 1.0 : 0.0);
    put(buf, s.label_fvc);
    put(buf, s.label_percent);
    put(buf, s.label_binary);
    put(buf, static_cast<double>(s.label_class));
    put(buf, static_cast<double>(data.splits[i]));
    buf.insert(buf.end(), data.images[i].data(), data.images[i].data() + data.images[i].size());
    patients.push_back({{"patient_id", s.patient_id}, {"final_week", s.final_week}, {"split", to_string(data.splits[i])}});
  }
  const auto bytes = buf.size() * sizeof(double);
  {
    std::ofstream out(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!out) throw Error("io_error", (dir / "tensors.bin").string() + ": write failed");
  }
  json columns = json::array();
  for (auto c : kVisitColumns) columns.push_back(std::string(c));
  json norm_cols = json::array();
  for (auto c : kNumericColumnNames) norm_cols.push_back(std::string(c));
  const Index img_h = data.images.empty() ? 0 : data.images[0].rows();
  const Index img_w = data.images.empty() ? 0 : data.images[0].cols();
  json manifest = {
      {"format", "marl-prepared"},
      {"version", 1},
      {"dtype", "float64-le"},
      {"t_max", data.t_max},
      {"D", kVisitWidth},
      {"column_order", columns},
      {"image", {{"height", img_h}, {"width", img_w}, {"window", {data.window_low, data.window_high}}}},
      {"record_layout", {"visits[t_max*D] row-major", "valid[t_max]", "label_fvc", "label_percent", "label_binary",
                         "label_class", "split", "image[height*width] row-major"}},
      {"normalizer", {{"columns", norm_cols}, {"mean", data.norm.mean}, {"std", data.norm.stddev}}},
      {"label", {{"mean", data.label_mean}, {"std", data.label_std}}},
      {"split", {{"fractions", data.fractions}, {"seed", data.split_seed}}},
      {"patients", patients},
      {"tensor_bytes", bytes},
      {"tensor_hash", hex64(fnv1a64(buf.data(), bytes))}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw Error("io_error", (dir / "manifest.json").string() + ": write failed");
  return manifest;
}

PreparedDataset read_prepared(const fs::path& dir) {
  std::ifstream meta(dir / "manifest.json");
  if (!meta) throw Error("missing_file", (dir / "manifest.json").string() + ": no such file");
  const json m = json::parse(meta);
  if (m.value("format", "") != "marl-prepared") throw Error("malformed_prepared", "manifest has the wrong format tag");
  if (m.at("D").get<int>() != kVisitWidth) throw Error("malformed_prepared", "visit width differs from this build");

  std::ifstream in(dir / "tensors.bin", std::ios::binary);
  if (!in) throw Error("missing_file", (dir / "tensors.bin").string() + ": no such file");
  const std::vector<char> raw{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (raw.size() != m.at("tensor_bytes").get<std::size_t>() ||
      hex64(fnv1a64(raw.data(), raw.size())) != m.at("tensor_hash").get<std::string>()) {
    throw Error("malformed_prepared", "tensors.bin does not match the manifest hash");
  }
  std::vector<double> buf(raw.size() / sizeof(double));
  std::memcpy(buf.data(), raw.data(), raw.size());

  PreparedDataset data;
  data.t_max = m.at("t_max").get<int>();
  const auto h = m.at("image").at("height").get<Index>();
  const auto w = m.at("image").at("width").get<Index>();
  const auto window = m.at("image").at("window").get<std::array<double, 2>>();
  data.window_low = window[0];
  data.window_high = window[1];
  data.norm.mean = m.at("normalizer").at("mean").get<std::array<double, kNumericColumns>>();
  data.norm.stddev = m.at("normalizer").at("std").get<std::array<double, kNumericColumns>>();
  data.label_mean = m.at("label").at("mean").get<double>();
  data.label_std = m.at("label").at("std").get<double>();
  data.fractions = m.at("split").at("fractions").get<std::array<double, 3>>();
  data.split_seed = m.at("split").at("seed").get<std::uint64_t>();

  const std::size_t per = static_cast<std::size_t>(data.t_max) * (kVisitWidth + 1) + 5 + static_cast<std::size_t>(h * w);
  const auto& patients = m.at("patients");
  if (buf.size() != per * patients.size()) throw Error("malformed_prepared", "tensor length does not match the manifest");
  std::size_t pos = 0;
  for (const auto& p : patients) {
    PatientSequence s;
    s.patient_id = p.at("patient_id").get<std::string>();
    s.final_week = p.at("final_week").get<int>();
    s.visits.resize(data.t_max, kVisitWidth);
    for (Index r = 0; r < data.t_max; ++r) {
      for (Index c = 0; c < kVisitWidth; ++c) s.visits(r, c) = buf[pos++];
    }
    for (int t = 0; t < data.t_max; ++t) s.valid.push_back(buf[pos++] != 0.0);
    s.label_fvc = buf[pos++];
    s.label_percent = buf[pos++];
    s.label_binary = static_cast<int>(buf[pos++]);
    s.label_class = static_cast<Severity>(static_cast<int>(buf[pos++]));
    data.splits.push_back(static_cast<Split>(static_cast<int>(buf[pos++])));
    ImageXd img(h, w);
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.begin() + static_cast<std::ptrdiff_t>(pos + h * w),
              img.data());
    pos += static_cast<std::size_t>(h * w);
    data.images.push_back(std::move(img));
    data.sequences.push_back(std::move(s));
  }
  return data;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", path.string() + ": no such file");
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

// ---------------------------------------------------------------------------

namespace {

std::string stem_name(const fs::path& stem) { return stem.filename().string(); }

std::string segment_warning(const std::string& name, const SegmentResult& r) {
  if (!r.lung_found) return name + ": no lung-like cluster, empty mask";
  if (!r.converged) return name + ": segmentation did not converge in " + std::to_string(r.iterations) + " iterations";
  return {};
}

}  // namespace

void run_ingest(const fs::path& in, const fs::path& out, const IngestConfig& config) {
  const auto stems = list_slices(in);
  fs::create_directories(out);
  parallel_for(stems.size(), [&](std::size_t i) {
    write_slice(out / stem_name(stems[i]), ingest_slice(load_slice(stems[i]), config.size));
  });
  std::ofstream meta(out / "ingest.json", std::ios::trunc);
  meta << json{{"size", config.size}, {"window", {config.window_low, config.window_high}}}.dump(2) << '\n';
}

StageLog run_segment(const fs::path& in, const fs::path& out, const SegmentOptions& options) {
  const auto stems = list_slices(in);
  fs::create_directories(out);
  std::vector<std::string> notes(stems.size());
  parallel_for(stems.size(), [&](std::size_t i) {
    const SegmentResult r = segment_lung(to_hounsfield(load_slice(stems[i])), options);
    write_pgm(out / (stem_name(stems[i]) + ".pgm"), r.mask);
    notes[i] = segment_warning(stem_name(stems[i]), r);
  });
  StageLog log;
  for (auto& n : notes) {
    if (!n.empty()) log.warnings.push_back(std::move(n));
  }
  return log;
}

void run_features(const fs::path& images, const fs::path& masks, const fs::path& out_csv) {
  const auto stems = list_slices(images);
  std::vector<SliceStats> rows(stems.size());
  parallel_for(stems.size(), [&](std::size_t i) {
    const RawSlice slice = load_slice(stems[i]);
    const LungMask mask = read_pgm(masks / (stem_name(stems[i]) + ".pgm"));
    rows[i] = {slice.patient_id, slice.week, extract_stats(to_hounsfield(slice), mask)};
  });
  write_stats_csv(out_csv, rows);
}

PreparedDataset run_prepare(const fs::path& records_csv, const fs::path& stats_csv, const fs::path& images,
                            const PrepareConfig& prepare) {
  std::ifstream meta(images / "ingest.json");
  if (!meta) throw Error("missing_file", (images / "ingest.json").string() + ": run the ingest stage first");
  const json doc = json::parse(meta);
  IngestConfig ingest;
  ingest.size = doc.at("size").get<int>();
  const auto window = doc.at("window").get<std::array<double, 2>>();
  ingest.window_low = window[0];
  ingest.window_high = window[1];

  std::map<std::pair<std::string, int>, fs::path> index;
  for (const auto& stem : list_slices(images)) {
    const RawSlice s = load_slice(stem);
    index[{s.patient_id, s.week}] = stem;
  }
  const SliceSource source = [&](const std::string& id, int week) {
    auto it = index.find({id, week});
    if (it == index.end()) throw Error("missing_slice", "no ingested slice for " + id + " week " + std::to_string(week));
    return load_slice(it->second);
  };
  return prepare_dataset(load_records(records_csv), read_stats_csv(stats_csv), source, prepare, ingest);
}

PreparedDataset prepare_from_raw(const fs::path& data_dir, const Config& config, StageLog* log) {
  const auto stems = list_slices(data_dir / "slices");
  std::vector<RawSlice> ingested(stems.size());
  std::vector<SliceStats> rows(stems.size());
  std::vector<std::string> notes(stems.size());
  parallel_for(stems.size(), [&](std::size_t i) {
    ingested[i] = ingest_slice(load_slice(stems[i]), config.ingest.size);
    const HuImage hu = to_hounsfield(ingested[i]);
    const SegmentResult r = segment_lung(hu, config.segment);
    rows[i] = {ingested[i].patient_id, ingested[i].week, extract_stats(hu, r.mask)};
    notes[i] = segment_warning(stem_name(stems[i]), r);
  });
  if (log) {
    for (auto& n : notes) {
      if (!n.empty()) log->warnings.push_back(std::move(n));
    }
  }
  std::map<std::pair<std::string, int>, std::size_t> index;
  for (std::size_t i = 0; i < ingested.size(); ++i) index[{ingested[i].patient_id, ingested[i].week}] = i;
  const SliceSource source = [&](const std::string& id, int week) { return ingested.at(index.at({id, week})); };

  // The staged path passes stats through CSV text; 17 significant digits
  // reproduce every double exactly, so no round trip is needed here.
  return prepare_dataset(load_records(data_dir / "records.csv"), rows, source, config.prepare, config.ingest);
}

std::vector<nn::Sample> make_samples(const PreparedDataset& data, nn::Task task) {
  std::vector<nn::Sample> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.sequences[i];
    auto& x = out[i];
    x.visits = s.visits;
    x.valid = s.valid;
    x.image = data.images[i];
    x.target = (s.label_fvc - data.label_mean) / data.label_std;
    x.label = task == nn::Task::binary ? s.label_binary : static_cast<int>(s.label_class);
  }
  return out;
}

}  // namespace marl
