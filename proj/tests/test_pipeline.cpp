#include <doctest.h>

#include "marl/pipeline.hpp"
#include "marl/synth.hpp"
#include "test_util.hpp"

#include <fstream>
#include <set>

using namespace marl;
using marl::test::error_code;
using marl::test::TempDir;

namespace {

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("P" + std::to_string(1000 + i));
  return out;
}

Config tiny_config(int patients) {
  Config c;
  c.synth.n_patients = patients;
  c.synth.image_size = 64;
  c.ingest.size = 64;
  return c;
}

}  // namespace

TEST_CASE("split sizes use floor for train and validation") {
  const auto s = split_patients(ids(64), {0.7, 0.15, 0.15}, 7);
  CHECK(std::count(s.begin(), s.end(), Split::train) == 44);
  CHECK(std::count(s.begin(), s.end(), Split::val) == 9);
  CHECK(std::count(s.begin(), s.end(), Split::test) == 11);

  const auto all = split_patients(ids(5), {1.0, 0.0, 0.0}, 7);
  CHECK(std::count(all.begin(), all.end(), Split::train) == 5);
  CHECK(error_code([] { split_patients(ids(4), {0.7, 0.15, 0.15}, 7); }) == "empty_split");
}

TEST_CASE("splits are seeded permutations") {
  const auto a = split_patients(ids(40), {0.5, 0.25, 0.25}, 3);
  CHECK(a == split_patients(ids(40), {0.5, 0.25, 0.25}, 3));
  CHECK(a != split_patients(ids(40), {0.5, 0.25, 0.25}, 4));
}

TEST_CASE("staged stages and the monolithic path give identical prepared tensors") {
  TempDir dir("pipeline");
  const Config c = tiny_config(8);
  write_dataset(synth_generate(c.synth), dir / "raw");

  run_ingest(dir / "raw" / "slices", dir / "img", c.ingest);
  run_segment(dir / "img", dir / "masks", c.segment);
  run_features(dir / "img", dir / "masks", dir / "stats.csv");
  const auto staged = write_prepared(dir / "staged", run_prepare(dir / "raw" / "records.csv", dir / "stats.csv", dir / "img", c.prepare));
  const auto mono = write_prepared(dir / "mono", prepare_from_raw(dir / "raw", c));
  CHECK(staged.at("tensor_hash") == mono.at("tensor_hash"));
  CHECK(staged == mono);
  CHECK(file_hash(dir / "staged" / "manifest.json") == file_hash(dir / "mono" / "manifest.json"));
}

TEST_CASE("prepared datasets round-trip and detect damage") {
  TempDir dir("prepared");
  const Config c = tiny_config(8);
  write_dataset(synth_generate(c.synth), dir / "raw");
  const PreparedDataset data = prepare_from_raw(dir / "raw", c);

  CHECK(data.size() == 8);
  CHECK(data.indices(Split::train).size() == 5);
  for (const auto& img : data.images) {
    CHECK(img.rows() == 64);
    CHECK(img.minCoeff() >= 0.0);
    CHECK(img.maxCoeff() <= 1.0);
  }
  for (const auto& s : data.sequences) {
    CHECK(s.length() == 8);
    CHECK(s.valid.back());
  }

  const auto manifest = write_prepared(dir / "p", data);
  CHECK(manifest.at("t_max") == 8);
  CHECK(manifest.at("D") == kVisitWidth);
  CHECK(manifest.at("column_order").size() == kVisitWidth);

  const PreparedDataset back = read_prepared(dir / "p");
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back.sequences[i].patient_id == data.sequences[i].patient_id);
    CHECK(back.sequences[i].visits == data.sequences[i].visits);
    CHECK(back.sequences[i].valid == data.sequences[i].valid);
    CHECK(back.sequences[i].label_fvc == data.sequences[i].label_fvc);
    CHECK(back.sequences[i].label_class == data.sequences[i].label_class);
    CHECK(back.images[i] == data.images[i]);
    CHECK(back.splits[i] == data.splits[i]);
  }
  CHECK(back.label_mean == data.label_mean);
  CHECK(back.norm.stddev == data.norm.stddev);
  CHECK(write_prepared(dir / "again", back).at("tensor_hash") == manifest.at("tensor_hash"));

  {
    std::fstream f(dir / "p" / "tensors.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x55');
  }
  CHECK(error_code([&] { read_prepared(dir / "p"); }) == "malformed_prepared");
  CHECK(error_code([&] { read_prepared(dir / "none"); }) == "missing_file");
}

TEST_CASE("samples carry z-scored regression targets and label indices") {
  TempDir dir("samples");
  const Config c = tiny_config(10);
  write_dataset(synth_generate(c.synth), dir / "raw");
  const PreparedDataset data = prepare_from_raw(dir / "raw", c);

  const auto reg = make_samples(data, nn::Task::regress);
  double sum = 0.0, sq = 0.0;
  const auto train = data.indices(Split::train);
  for (std::size_t i : train) {
    sum += reg[i].target;
    sq += reg[i].target * reg[i].target;
    CHECK(reg[i].target * data.label_std + data.label_mean == doctest::Approx(data.sequences[i].label_fvc));
  }
  CHECK(std::abs(sum / static_cast<double>(train.size())) < 1e-12);
  CHECK(sq / static_cast<double>(train.size()) == doctest::Approx(1.0).epsilon(1e-12));

  const auto bin = make_samples(data, nn::Task::binary);
  const auto mc = make_samples(data, nn::Task::multiclass);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(bin[i].label == (data.sequences[i].label_fvc >= 2500.0 ? 1 : 0));
    CHECK(mc[i].label == static_cast<int>(severity_class(data.sequences[i].label_percent)));
  }
}

TEST_CASE("staged prepare needs the ingest metadata") {
  TempDir dir("noingest");
  std::filesystem::create_directories(dir / "img");
  CHECK(error_code([&] { run_prepare(dir / "r.csv", dir / "s.csv", dir / "img", {}); }) == "missing_file");
}
