#include "marl/cli.hpp"

#include "marl/config.hpp"
#include "marl/nn/gradcheck.hpp"
#include "marl/nn/weights_io.hpp"
#include "marl/pipeline.hpp"
#include "marl/report.hpp"
#include "marl/synth.hpp"
#include "marl/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <optional>

namespace marl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::array<double, 2> parse_window(const std::string& text) {
  const auto colon = text.find(':', 1);
  if (colon == std::string::npos) throw Error("invalid_config", "window must look like LOW:HIGH, got '" + text + "'");
  try {
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error("invalid_config", "window must look like LOW:HIGH, got '" + text + "'");
  }
}

json warnings_json(const StageLog& log) { return log.warnings; }

struct Options {
  std::string config_path;
  std::string in, out, img, mask, records, stats, data, prepared, weights, metrics;
  std::optional<std::uint64_t> seed;
  std::optional<int> patients, size, clusters, radius, t_max, epochs, batch;
  std::optional<double> noise, p, q, tol, lr;
  std::optional<std::string> window, task, variant, split;
};

void add_config(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "JSON configuration document")->check(CLI::ExistingFile);
}

Config resolve(const Options& o) {
  Config c = o.config_path.empty() ? Config{} : load_config(o.config_path);
  if (o.seed) c.synth.seed = *o.seed, c.train.seed = *o.seed;
  if (o.patients) c.synth.n_patients = *o.patients;
  if (o.noise) c.synth.noise_sigma = *o.noise;
  if (o.size) c.ingest.size = *o.size;
  if (o.window) {
    const auto w = parse_window(*o.window);
    c.ingest.window_low = w[0];
    c.ingest.window_high = w[1];
  }
  if (o.clusters) c.segment.clusters = *o.clusters;
  if (o.p) c.segment.spatial.p = *o.p;
  if (o.q) c.segment.spatial.q = *o.q;
  if (o.radius) c.segment.spatial.window_radius = *o.radius;
  if (o.tol) c.segment.tol = *o.tol;
  if (o.t_max) c.prepare.t_max = *o.t_max;
  if (o.task) c.train.task = nn::parse_task(*o.task);
  if (o.variant) c.train.variant = nn::parse_variant(*o.variant);
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch) c.train.batch_size = *o.batch;
  if (o.lr) c.train.learning_rate = *o.lr;
  return c;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error("invalid_config", "unknown split '" + s + "'");
}

json summary(const MetricsReport& r) {
  json j = {{"task", nn::to_string(r.task)}, {"variant", nn::to_string(r.variant)}, {"split", r.split},
            {"best_epoch", r.best_epoch}, {"seconds", r.seconds}};
  if (r.r2) j["r2"] = *r.r2;
  if (r.accuracy) j["accuracy"] = *r.accuracy;
  return j;
}

int dispatch(const std::string& command, const Options& o, std::ostream& out) {
  const Config c = resolve(o);
  json result = {{"command", command}, {"status", "ok"}};

  if (command == "synth") {
    validate(c.synth);
    const auto data = synth_generate(c.synth);
    write_dataset(data, o.out);
    result["slices"] = data.slices.size();
    result["records"] = data.records.size();
  } else if (command == "ingest") {
    run_ingest(o.in, o.out, c.ingest);
  } else if (command == "segment") {
    result["warnings"] = warnings_json(run_segment(o.in, o.out, c.segment));
  } else if (command == "features") {
    run_features(o.img, o.mask, o.out);
  } else if (command == "prepare") {
    const auto manifest = write_prepared(o.out, run_prepare(o.records, o.stats, o.img, c.prepare));
    result["tensor_hash"] = manifest.at("tensor_hash");
  } else if (command == "train") {
    if (o.data.empty() == o.prepared.empty()) throw Error("usage", "train needs exactly one of --data or --prepared");
    StageLog log;
    PreparedDataset data;
    if (!o.data.empty()) {
      data = prepare_from_raw(o.data, c, &log);
      result["tensor_hash"] = write_prepared(fs::path(o.out) / "prepared", data).at("tensor_hash");
    } else {
      data = read_prepared(o.prepared);
    }
    auto trained = train(c.train, data);
    nn::write_weights(fs::path(o.out) / "model", trained.model, {{"label_mean", data.label_mean}, {"label_std", data.label_std}});
    write_report(trained.report, o.out);
    result["metrics"] = summary(trained.report);
    result["warnings"] = warnings_json(log);
  } else if (command == "eval") {
    const auto loaded = nn::read_weights(o.weights);
    const auto data = read_prepared(o.prepared);
    const auto report = evaluate(loaded.model, data, parse_split(o.split.value_or("test")));
    write_report(report, o.out);
    result["metrics"] = summary(report);
  } else if (command == "gradcheck") {
    const double threshold = 1e-4;
    json checks = json::array();
    bool pass = true;
    for (auto variant : {nn::Variant::v1, nn::Variant::v2}) {
      auto fixture = nn::make_gradcheck_fixture(variant, c.train.task, c.train.seed);
      const auto r = nn::grad_check(fixture.model, fixture.batch());
      pass = pass && r.max_rel_error < threshold;
      checks.push_back({{"variant", nn::to_string(variant)}, {"max_rel_error", r.max_rel_error},
                        {"worst_block", r.worst_block}, {"checked", r.checked}, {"skipped_kinks", r.skipped_kinks}});
    }
    result["checks"] = checks;
    result["threshold"] = threshold;
    if (!pass) throw Error("gradcheck_failed", checks.dump());
  } else if (command == "report") {
    std::ifstream in(o.metrics);
    if (!in) throw Error("missing_file", o.metrics + ": no such file");
    write_report(metrics_from_json(json::parse(in)), o.out);
  }
  out << result.dump() << '\n';
  return 0;
}

void error_line(std::ostream& err, const std::string& code, const std::string& message) {
  err << json{{"error", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal lung CT and patient-record pipeline"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic phantom cohort");
  add_config(synth, o);
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--seed", o.seed);
  synth->add_option("--patients", o.patients);
  synth->add_option("--noise", o.noise, "phantom noise sigma (HU)");

  auto* ingest = app.add_subcommand("ingest", "resample raw slices to a common size");
  add_config(ingest, o);
  ingest->add_option("--in", o.in)->required();
  ingest->add_option("--out", o.out)->required();
  ingest->add_option("--size", o.size);
  ingest->add_option("--window", o.window, "exposure window LOW:HIGH in HU");

  auto* segment = app.add_subcommand("segment", "spatial fuzzy c-means lung masks");
  add_config(segment, o);
  segment->add_option("--in", o.in)->required();
  segment->add_option("--out", o.out)->required();
  segment->add_option("--clusters", o.clusters);
  segment->add_option("--p", o.p);
  segment->add_option("--q", o.q);
  segment->add_option("--radius", o.radius);
  segment->add_option("--tol", o.tol);

  auto* features = app.add_subcommand("features", "per-slice statistics inside the lung mask");
  add_config(features, o);
  features->add_option("--img", o.img)->required();
  features->add_option("--mask", o.mask)->required();
  features->add_option("--out", o.out, "stats CSV")->required();

  auto* prepare = app.add_subcommand("prepare", "encode, normalise and pad patient sequences");
  add_config(prepare, o);
  prepare->add_option("--records", o.records)->required();
  prepare->add_option("--stats", o.stats)->required();
  prepare->add_option("--img", o.img, "ingested slice directory")->required();
  prepare->add_option("--out", o.out)->required();
  prepare->add_option("--t-max", o.t_max);

  auto* train_cmd = app.add_subcommand("train", "train a model and write weights and reports");
  add_config(train_cmd, o);
  train_cmd->add_option("--data", o.data, "raw dataset directory (slices/, records.csv)");
  train_cmd->add_option("--prepared", o.prepared, "prepared dataset directory");
  train_cmd->add_option("--out", o.out)->required();
  train_cmd->add_option("--task", o.task, "regress | binary | multiclass");
  train_cmd->add_option("--variant", o.variant, "v1 | v2 | lstm_only");
  train_cmd->add_option("--epochs", o.epochs);
  train_cmd->add_option("--batch", o.batch);
  train_cmd->add_option("--lr", o.lr);
  train_cmd->add_option("--seed", o.seed);

  auto* eval = app.add_subcommand("eval", "evaluate saved weights on a prepared dataset");
  add_config(eval, o);
  eval->add_option("--weights", o.weights, "weight file stem")->required();
  eval->add_option("--prepared", o.prepared)->required();
  eval->add_option("--out", o.out)->required();
  eval->add_option("--split", o.split, "train | val | test");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the composed models");
  add_config(gradcheck, o);
  gradcheck->add_option("--task", o.task);
  gradcheck->add_option("--seed", o.seed);

  auto* report = app.add_subcommand("report", "rewrite CSV and SVG reports from metrics.json");
  add_config(report, o);
  report->add_option("--metrics", o.metrics)->required();
  report->add_option("--out", o.out)->required();

  std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, o, out);
  } catch (const Error& e) {
    error_line(err, e.code(), e.what());
    return e.code() == "usage" ? 2 : 1;
  } catch (const nlohmann::json::exception& e) {
    error_line(err, "malformed_json", e.what());
  } catch (const std::exception& e) {
    error_line(err, "internal", e.what());
  }
  return 1;
}

}  // namespace marl
