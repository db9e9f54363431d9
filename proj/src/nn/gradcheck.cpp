#include "marl/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace marl::nn {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

void check_finite(const ParamLayout& layout, const VectorXd& grad) {
  for (Index i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw Error("non_finite_gradient", "non-finite gradient in parameter block '" + layout.owner(i).name +
                                             "' (flat index " + std::to_string(i) + ")");
    }
  }
}

namespace {

void mix(std::uint64_t& h, std::uint64_t v) { h = fnv1a64(&v, sizeof v, h); }

void mix_signs(std::uint64_t& h, const MatrixXd& m) {
  std::uint64_t word = 0;
  int bits = 0;
  for (Index i = 0; i < m.size(); ++i) {
    word = (word << 1) | (m.data()[i] > 0.0 ? 1u : 0u);
    if (++bits == 64) {
      mix(h, word);
      word = 0;
      bits = 0;
    }
  }
  mix(h, word);
}

void record(GradCheckReport& r, Index i, double a, double n, const std::string& block) {
  ++r.checked;
  const double e = relative_error(a, n);
  if (e > r.max_rel_error || r.worst_index < 0) {
    r.max_rel_error = e;
    r.worst_index = i;
    r.worst_block = block;
    r.worst_analytic = a;
    r.worst_numeric = n;
  }
}

}  // namespace

std::uint64_t branch_signature(const ForwardTrace& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& pre : t.cnn_cache.pre) mix_signs(h, pre.data);
  for (const auto& am : t.cnn_cache.argmax) {
    h = fnv1a64(am.data(), static_cast<std::size_t>(am.size()) * sizeof(int), h);
  }
  mix_signs(h, t.head_pre);
  return h;
}

GradCheckReport grad_check(Model& model, const std::vector<const Sample*>& batch, double eps) {
  VectorXd analytic;
  model.loss_and_gradient(batch, analytic);
  check_finite(model.layout(), analytic);

  // Mean loss and branch signature from one forward pass per sample.
  auto probe = [&](std::uint64_t& sig) {
    double total = 0.0;
    sig = 0;
    for (const Sample* s : batch) {
      const ForwardTrace t = model.forward(*s);
      total += model.output_loss(t.output, *s);
      mix(sig, branch_signature(t));
    }
    return total / static_cast<double>(batch.size());
  };

  GradCheckReport report;
  VectorXd& theta = model.params();
  for (Index i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    std::uint64_t sig_plus = 0, sig_minus = 0;
    theta[i] = saved + eps;
    const double plus = probe(sig_plus);
    theta[i] = saved - eps;
    const double minus = probe(sig_minus);
    theta[i] = saved;
    if (sig_plus != sig_minus) {
      ++report.skipped_kinks;
      continue;
    }
    record(report, i, analytic[i], (plus - minus) / (2.0 * eps), model.layout().owner(i).name);
  }
  return report;
}

GradCheckReport grad_check_function(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                                    const VectorXd& analytic, double eps) {
  GradCheckReport report;
  VectorXd probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double plus = f(probe);
    probe[i] = x[i] - eps;
    const double minus = f(probe);
    probe[i] = x[i];
    record(report, i, analytic[i], (plus - minus) / (2.0 * eps), "x");
  }
  return report;
}

}  // namespace marl::nn

namespace marl::nn {

std::vector<const Sample*> GradCheckFixture::batch() const {
  std::vector<const Sample*> out;
  for (const auto& s : samples) out.push_back(&s);
  return out;
}

GradCheckFixture make_gradcheck_fixture(Variant variant, Task task, std::uint64_t seed) {
  ModelConfig config;
  config.input_width = 5;
  config.conv_channels = {2, 3, 3};
  config.lstm_hidden = 4;
  config.head_width = 5;
  config.variant = variant;
  config.task = task;
  config.seed = seed;
  GradCheckFixture f{Model(config), {}};

  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0), symmetric(-1.0, 1.0);
  for (int n = 0; n < 2; ++n) {
    Sample s;
    s.visits = MatrixXd::Zero(3, config.input_width);
    s.valid = {false, true, true};
    for (Index t = 1; t < 3; ++t) {
      for (Index c = 0; c < config.input_width; ++c) s.visits(t, c) = symmetric(rng);
    }
    s.image = ImageXd(8, 8);
    for (Index i = 0; i < s.image.size(); ++i) s.image.data()[i] = unit(rng);
    s.target = symmetric(rng);
    s.label = n % static_cast<int>(task_outputs(task) > 1 ? task_outputs(task) : 1);
    f.samples.push_back(std::move(s));
  }
  return f;
}

}  // namespace marl::nn
