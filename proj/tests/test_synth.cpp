#include <doctest.h>

#include "marl/synth.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

using namespace marl;
using marl::test::TempDir;

TEST_CASE("generation is deterministic in the seed") {
  SynthSpec spec;
  spec.n_patients = 5;
  spec.image_size = 64;
  const auto a = synth_generate(spec), b = synth_generate(spec);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].fvc == b.records[i].fvc);
    CHECK(a.slices[i].pixels == b.slices[i].pixels);
  }
  spec.seed = 8;
  const auto c = synth_generate(spec);
  CHECK(c.records.front().fvc != a.records.front().fvc);
}

TEST_CASE("visit counts and week order follow the generator settings") {
  SynthSpec spec;
  spec.n_patients = 12;
  spec.image_size = 64;
  spec.visits_min = 2;
  spec.visits_max = 4;
  const auto d = synth_generate(spec);
  std::map<std::string, std::vector<int>> weeks;
  for (const auto& r : d.records) weeks[r.patient_id].push_back(r.week);
  CHECK(weeks.size() == 12);
  for (const auto& [id, w] : weeks) {
    CHECK(w.size() >= 2);
    CHECK(w.size() <= 4);
    CHECK(std::is_sorted(w.begin(), w.end()));
    CHECK(std::adjacent_find(w.begin(), w.end()) == w.end());
  }
}

TEST_CASE("noise-free phantom matches the analytic ellipses") {
  PhantomGeometry g;
  g.size = 64;
  g.body_ax = 27;
  g.body_ay = 22;
  g.lung_ax = 6;
  g.lung_ay = 10;
  g.lung_offset = 11;
  std::mt19937_64 rng(1);
  const Phantom p = make_phantom(g, 0.0, rng);
  const double c = 31.5;
  for (int r = 0; r < 64; ++r) {
    for (int col = 0; col < 64; ++col) {
      const double dx = col - c, dy = r - c;
      const bool body = std::pow(dx / 27, 2) + std::pow(dy / 22, 2) <= 1.0;
      const bool lung = std::pow((dx - 11) / 6, 2) + std::pow(dy / 10, 2) <= 1.0 ||
                        std::pow((dx + 11) / 6, 2) + std::pow(dy / 10, 2) <= 1.0;
      CHECK(p.lungs.bits(r, col) == (lung && body));
      CHECK(p.image.values(r, col) == (lung ? g.hu_lung : body ? g.hu_body : g.hu_air));
    }
  }
  // Pixel counts approach the ellipse areas.
  CHECK(std::abs(static_cast<double>(p.lungs.count()) - 2 * std::numbers::pi * 60) < 20);
}

TEST_CASE("fvc is an affine function of the generative features") {
  const SynthSpec spec;
  const auto d = synth_generate(spec);
  const auto n = static_cast<Index>(d.truth.size());
  MatrixXd x(n, 7);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    const auto& t = d.truth[static_cast<std::size_t>(i)];
    x.row(i) << 1.0, t.lung_area, t.body_area, t.age, t.sex == Sex::female, t.smoking == Smoking::smoker,
        t.smoking == Smoking::ex_smoker;
    y[i] = t.fvc;
  }
  const VectorXd beta = x.colPivHouseholderQr().solve(y);
  const double ss_res = (x * beta - y).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  CHECK(1.0 - ss_res / ss_tot > 0.99);
  // Recovered lung coefficient is close to the generating one.
  CHECK(beta[1] == doctest::Approx(spec.fvc_lung_coef).epsilon(0.05));
}

TEST_CASE("records carry the truth fvc and a percent consistent with the reference") {
  SynthSpec spec;
  spec.n_patients = 6;
  spec.image_size = 64;
  const auto d = synth_generate(spec);
  for (std::size_t i = 0; i < d.truth.size(); ++i) {
    CHECK(d.records[i].fvc == d.truth[i].fvc);
    CHECK(d.records[i].percent == d.truth[i].percent);
    CHECK(d.truth[i].percent > 0.0);
  }
}

TEST_CASE("dataset files round-trip") {
  TempDir dir("synth");
  SynthSpec spec;
  spec.n_patients = 4;
  spec.image_size = 64;
  const auto d = synth_generate(spec);
  write_dataset(d, dir.path());
  const auto truth = read_truth_csv(dir / "truth.csv");
  REQUIRE(truth.size() == d.truth.size());
  CHECK(truth[2].fvc == d.truth[2].fvc);
  CHECK(truth[2].lung_area == d.truth[2].lung_area);
  const auto stems = list_slices(dir / "slices");
  CHECK(stems.size() == d.slices.size());
  CHECK(load_slice(stems[0]).pixels == d.slices[0].pixels);
  CHECK(slice_stem("P007", 12) == "P007_w+012");
  CHECK(slice_stem("P007", -3) == "P007_w-003");
}
