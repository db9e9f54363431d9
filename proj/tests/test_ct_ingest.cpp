#include <doctest.h>

#include "marl/ct_ingest.hpp"
#include "test_util.hpp"

#include <fstream>
#include <json.hpp>

using namespace marl;
using marl::test::error_code;
using marl::test::TempDir;

namespace {

RawSlice slice_of(int w, int h, std::vector<std::int16_t> px, double slope = 1.0, double intercept = -1024.0) {
  RawSlice s;
  s.width = w;
  s.height = h;
  s.pixels = std::move(px);
  s.rescale_slope = slope;
  s.rescale_intercept = intercept;
  s.patient_id = "P1";
  s.week = 3;
  return s;
}

HuImage hu_of(std::initializer_list<std::initializer_list<double>> rows) {
  HuImage img;
  img.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) img.values(r, c++) = v;
    ++r;
  }
  return img;
}

}  // namespace

TEST_CASE("slice files round-trip bit-exactly") {
  TempDir dir("ingest");
  const RawSlice s = slice_of(2, 2, {0, 1, 2, 3});
  write_slice(dir / "a", s);
  for (const char* name : {"a", "a.raw", "a.json"}) {
    const RawSlice back = load_slice(dir / name);
    CHECK(back.width == 2);
    CHECK(back.height == 2);
    CHECK(back.pixels == s.pixels);
    CHECK(back.rescale_slope == 1.0);
    CHECK(back.rescale_intercept == -1024.0);
    CHECK(back.patient_id == "P1");
    CHECK(back.week == 3);
  }
  write_slice(dir / "b", load_slice(dir / "a"));
  std::ifstream a(dir / "a.raw", std::ios::binary), b(dir / "b.raw", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST_CASE("load_slice reports each failure distinctly") {
  TempDir dir("ingest_err");
  CHECK(error_code([&] { load_slice(dir / "nope"); }) == "missing_file");

  write_slice(dir / "short", slice_of(2, 4, {0, 1, 2, 3, 4, 5, 6, 7}));
  auto doc = nlohmann::json::parse(std::ifstream(dir / "short.json"));
  doc["width"] = 4;
  std::ofstream(dir / "short.json") << doc.dump();
  CHECK(error_code([&] { load_slice(dir / "short"); }) == "pixel_count_mismatch");

  write_slice(dir / "noslope", slice_of(1, 1, {5}));
  doc = nlohmann::json::parse(std::ifstream(dir / "noslope.json"));
  doc.erase("rescale_slope");
  std::ofstream(dir / "noslope.json") << doc.dump();
  CHECK(error_code([&] { load_slice(dir / "noslope"); }) == "malformed_sidecar");

  std::ofstream(dir / "garbage.json") << "{not json";
  std::ofstream(dir / "garbage.raw") << "xx";
  CHECK(error_code([&] { load_slice(dir / "garbage"); }) == "malformed_sidecar");
}

TEST_CASE("list_slices returns sorted stems") {
  TempDir dir("ingest_list");
  write_slice(dir / "b", slice_of(1, 1, {0}));
  write_slice(dir / "a", slice_of(1, 1, {0}));
  const auto stems = list_slices(dir.path());
  REQUIRE(stems.size() == 2);
  CHECK(stems[0].filename() == "a");
  CHECK(stems[1].filename() == "b");
}

TEST_CASE("to_hounsfield applies slope and intercept then clamps") {
  CHECK(to_hounsfield(slice_of(1, 1, {0})).values(0, 0) == -1024.0);
  CHECK(to_hounsfield(slice_of(1, 1, {1524})).values(0, 0) == 500.0);
  CHECK(to_hounsfield(slice_of(1, 1, {100}, 2.0, -1000.0)).values(0, 0) == -800.0);
  CHECK(to_hounsfield(slice_of(1, 1, {32000}, 1.0, 0.0)).values(0, 0) == kHuMax);
  CHECK(to_hounsfield(slice_of(1, 1, {-32000}, 1.0, 0.0)).values(0, 0) == kHuMin);
}

TEST_CASE("to_hounsfield is affine before clamping") {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> px(0, 1500);
  for (int i = 0; i < 200; ++i) {
    const auto a = static_cast<std::int16_t>(px(rng)), b = static_cast<std::int16_t>(px(rng));
    const auto hu = [](std::int16_t p) { return to_hounsfield(slice_of(1, 1, {p}, 1.25, -900.0)).values(0, 0); };
    CHECK(hu(a) + hu(b) - hu(0) == doctest::Approx(hu(static_cast<std::int16_t>(a + b))).epsilon(1e-12));
  }
}

TEST_CASE("correct_exposure maps the window onto [0, 1]") {
  const HuImage img = hu_of({{-1024.0, -312.0, 400.0, -2000.0, 3000.0}});
  const HuImage out = correct_exposure(img, -1024.0, 400.0);
  CHECK(out.values(0, 0) == 0.0);
  CHECK(out.values(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.values(0, 2) == 1.0);
  CHECK(out.values(0, 3) == 0.0);
  CHECK(out.values(0, 4) == 1.0);
  CHECK(error_code([&] { correct_exposure(img, 10.0, 10.0); }) == "degenerate_window");
  CHECK(error_code([&] { correct_exposure(img, 20.0, 10.0); }) == "degenerate_window");

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> hu(kHuMin, kHuMax);
  HuImage random;
  random.values.resize(16, 16);
  for (Index i = 0; i < random.values.size(); ++i) random.values.data()[i] = hu(rng);
  const HuImage r = correct_exposure(random, -700.0, 100.0);
  CHECK(r.values.minCoeff() >= 0.0);
  CHECK(r.values.maxCoeff() <= 1.0);
}

TEST_CASE("resize_to interpolates bilinearly") {
  HuImage constant;
  constant.values = ImageXd::Constant(4, 4, 7.0);
  const HuImage big = resize_to(constant, 8, 8);
  CHECK(big.width() == 8);
  CHECK(big.height() == 8);
  CHECK((big.values.array() == 7.0).all());

  std::mt19937 rng(9);
  std::uniform_real_distribution<double> hu(-1000.0, 1000.0);
  HuImage random;
  random.values.resize(5, 7);
  for (Index i = 0; i < random.values.size(); ++i) random.values.data()[i] = hu(rng);
  const HuImage same = resize_to(random, 7, 5);
  CHECK((same.values.array() == random.values.array()).all());

  // Corner-aligned sampling of [0, 1] at four points: 0, 1/3, 2/3, 1.
  const HuImage ramp = resize_to(hu_of({{0.0, 1.0}}), 4, 1);
  const double expected[] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  for (int i = 0; i < 4; ++i) CHECK(ramp.values(0, i) == doctest::Approx(expected[i]).epsilon(1e-15));
  for (int i = 1; i < 4; ++i) CHECK(ramp.values(0, i) >= ramp.values(0, i - 1));

  for (auto [w, h] : {std::pair{3, 11}, std::pair{13, 2}, std::pair{20, 20}}) {
    const HuImage r = resize_to(random, w, h);
    CHECK(r.values.minCoeff() >= random.values.minCoeff());
    CHECK(r.values.maxCoeff() <= random.values.maxCoeff());
  }
  CHECK(error_code([&] { resize_to(random, 0, 4); }) == "invalid_size");
}

TEST_CASE("ingest_slice stores rounded HU at the target size") {
  RawSlice s = slice_of(2, 2, {0, 1024, 1524, 1024});
  const RawSlice out = ingest_slice(s, 4);
  CHECK(out.width == 4);
  CHECK(out.height == 4);
  CHECK(out.rescale_slope == 1.0);
  CHECK(out.rescale_intercept == 0.0);
  CHECK(out.patient_id == "P1");
  CHECK(out.week == 3);
  CHECK(out.pixels[0] == -1024);
  CHECK(out.pixels[3] == 0);
  CHECK(out.pixels[12] == 500);
  CHECK(to_hounsfield(ingest_slice(s, 2)).values == to_hounsfield(s).values);
}
