#include "marl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace marl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw Error("invalid_config", where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) throw Error("invalid_config", "unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw Error("invalid_config", where + "." + key + " has the wrong type");
  }
}

}  // namespace

void validate(const SynthSpec& s) {
  if (s.n_patients < 4) throw Error("invalid_config", "synth.n_patients must be >= 4");
  if (s.visits_min < 1 || s.visits_max < s.visits_min) throw Error("invalid_config", "synth visit range is invalid");
  if (s.noise_sigma < 0) throw Error("invalid_config", "synth.noise_sigma must be >= 0");
  if (s.image_size < 64 || s.image_size % 8 != 0) {
    throw Error("invalid_config", "synth.image_size must be a multiple of 8 and >= 64");
  }
}

void validate_split(const std::array<double, 3>& f) {
  for (double v : f) {
    if (!(v >= 0.0)) throw Error("invalid_config", "split fractions must be non-negative");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw Error("invalid_config", "split fractions must sum to 1");
  if (f[0] <= 0.0) throw Error("invalid_config", "the training fraction must be positive");
}

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw Error("invalid_config", "train.epochs must be >= 1");
  if (c.batch_size < 1) throw Error("invalid_config", "train.batch_size must be >= 1");
  if (!(c.learning_rate >= 0.0)) throw Error("invalid_config", "train.learning_rate must be >= 0");
  if (c.lstm_hidden < 1 || c.head_width < 1) throw Error("invalid_config", "model widths must be positive");
}

Config config_from_json(const json& doc) {
  Config c;
  reject_unknown(doc, {"synth", "ingest", "segment", "prepare", "train"}, "config");

  if (auto it = doc.find("synth"); it != doc.end()) {
    const std::string w = "synth";
    reject_unknown(*it, {"seed", "n_patients", "visits_min", "visits_max", "noise_sigma", "image_size",
                         "fvc_intercept", "fvc_lung_coef", "fvc_body_coef", "fvc_age_coef", "fvc_female",
                         "fvc_smoker", "fvc_ex_smoker", "fvc_noise", "ref_male", "ref_female", "ref_age_coef", "ref_body_coef", "ref_body_area"},
                   w);
    auto& s = c.synth;
    read(*it, "seed", s.seed, w);
    read(*it, "n_patients", s.n_patients, w);
    read(*it, "visits_min", s.visits_min, w);
    read(*it, "visits_max", s.visits_max, w);
    read(*it, "noise_sigma", s.noise_sigma, w);
    read(*it, "image_size", s.image_size, w);
    read(*it, "fvc_intercept", s.fvc_intercept, w);
    read(*it, "fvc_lung_coef", s.fvc_lung_coef, w);
    read(*it, "fvc_body_coef", s.fvc_body_coef, w);
    read(*it, "fvc_age_coef", s.fvc_age_coef, w);
    read(*it, "fvc_female", s.fvc_female, w);
    read(*it, "fvc_smoker", s.fvc_smoker, w);
    read(*it, "fvc_ex_smoker", s.fvc_ex_smoker, w);
    read(*it, "fvc_noise", s.fvc_noise, w);
    read(*it, "ref_male", s.ref_male, w);
    read(*it, "ref_female", s.ref_female, w);
    read(*it, "ref_age_coef", s.ref_age_coef, w);
    read(*it, "ref_body_coef", s.ref_body_coef, w);
    read(*it, "ref_body_area", s.ref_body_area, w);
    validate(s);
  }

  if (auto it = doc.find("ingest"); it != doc.end()) {
    reject_unknown(*it, {"size", "window"}, "ingest");
    read(*it, "size", c.ingest.size, "ingest");
    if (auto win = it->find("window"); win != it->end()) {
      std::array<double, 2> w{};
      read(*it, "window", w, "ingest");
      c.ingest.window_low = w[0];
      c.ingest.window_high = w[1];
    }
    if (c.ingest.size <= 0) throw Error("invalid_config", "ingest.size must be positive");
    if (!(c.ingest.window_low < c.ingest.window_high)) throw Error("invalid_config", "ingest.window must be low < high");
  }

  if (auto it = doc.find("segment"); it != doc.end()) {
    const std::string w = "segment";
    reject_unknown(*it, {"clusters", "fuzzifier", "p", "q", "radius", "tol", "max_iter", "morph_radius", "seed"}, w);
    auto& s = c.segment;
    read(*it, "clusters", s.clusters, w);
    read(*it, "fuzzifier", s.fuzzifier, w);
    read(*it, "p", s.spatial.p, w);
    read(*it, "q", s.spatial.q, w);
    read(*it, "radius", s.spatial.window_radius, w);
    read(*it, "tol", s.tol, w);
    read(*it, "max_iter", s.max_iter, w);
    read(*it, "morph_radius", s.morph_radius, w);
    read(*it, "seed", s.seed, w);
    if (s.clusters < 2 || !(s.fuzzifier > 1.0) || s.spatial.p < 0 || s.spatial.q < 0 || s.spatial.window_radius < 1 ||
        s.max_iter < 1 || s.morph_radius < 1 || !(s.tol > 0)) {
      throw Error("invalid_config", "segment parameters out of range");
    }
  }

  if (auto it = doc.find("prepare"); it != doc.end()) {
    reject_unknown(*it, {"t_max", "split", "seed"}, "prepare");
    read(*it, "t_max", c.prepare.t_max, "prepare");
    read(*it, "split", c.prepare.split, "prepare");
    read(*it, "seed", c.prepare.seed, "prepare");
    if (c.prepare.t_max < 1) throw Error("invalid_config", "prepare.t_max must be >= 1");
    validate_split(c.prepare.split);
  }

  if (auto it = doc.find("train"); it != doc.end()) {
    const std::string w = "train";
    reject_unknown(*it, {"task", "variant", "epochs", "batch_size", "learning_rate", "seed", "lstm_hidden",
                         "head_width", "conv_channels"},
                   w);
    auto& t = c.train;
    std::string task(to_string(t.task)), variant(to_string(t.variant));
    read(*it, "task", task, w);
    read(*it, "variant", variant, w);
    t.task = nn::parse_task(task);
    t.variant = nn::parse_variant(variant);
    read(*it, "epochs", t.epochs, w);
    read(*it, "batch_size", t.batch_size, w);
    read(*it, "learning_rate", t.learning_rate, w);
    read(*it, "seed", t.seed, w);
    read(*it, "lstm_hidden", t.lstm_hidden, w);
    read(*it, "head_width", t.head_width, w);
    read(*it, "conv_channels", t.conv_channels, w);
    validate(t);
  }
  return c;
}

json config_to_json(const Config& c) {
  const auto& s = c.synth;
  const auto& g = c.segment;
  const auto& t = c.train;
  return {
      {"synth",
       {{"seed", s.seed}, {"n_patients", s.n_patients}, {"visits_min", s.visits_min}, {"visits_max", s.visits_max},
        {"noise_sigma", s.noise_sigma}, {"image_size", s.image_size}, {"fvc_intercept", s.fvc_intercept},
        {"fvc_lung_coef", s.fvc_lung_coef}, {"fvc_body_coef", s.fvc_body_coef}, {"fvc_age_coef", s.fvc_age_coef},
        {"fvc_female", s.fvc_female}, {"fvc_smoker", s.fvc_smoker}, {"fvc_ex_smoker", s.fvc_ex_smoker},
        {"fvc_noise", s.fvc_noise}, {"ref_male", s.ref_male}, {"ref_female", s.ref_female},
        {"ref_age_coef", s.ref_age_coef}, {"ref_body_coef", s.ref_body_coef},
        {"ref_body_area", s.ref_body_area}}},
      {"ingest", {{"size", c.ingest.size}, {"window", {c.ingest.window_low, c.ingest.window_high}}}},
      {"segment",
       {{"clusters", g.clusters}, {"fuzzifier", g.fuzzifier}, {"p", g.spatial.p}, {"q", g.spatial.q},
        {"radius", g.spatial.window_radius}, {"tol", g.tol}, {"max_iter", g.max_iter},
        {"morph_radius", g.morph_radius}, {"seed", g.seed}}},
      {"prepare", {{"t_max", c.prepare.t_max}, {"split", c.prepare.split}, {"seed", c.prepare.seed}}},
      {"train",
       {{"task", nn::to_string(t.task)}, {"variant", nn::to_string(t.variant)}, {"epochs", t.epochs},
        {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate}, {"seed", t.seed},
        {"lstm_hidden", t.lstm_hidden}, {"head_width", t.head_width}, {"conv_channels", t.conv_channels}}}};
}

Config load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_file", path.string() + ": no such file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("invalid_config", path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace marl
