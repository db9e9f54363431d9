#include "marl/nn/weights_io.hpp"

#include <fstream>
#include <cstring>
#include <iterator>

namespace marl::nn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path with_suffix(const fs::path& stem, const char* suffix) { return fs::path(stem.string() + suffix); }

}  // namespace

json config_to_json(const ModelConfig& c) {
  return {{"input_width", c.input_width},
          {"conv_channels", c.conv_channels},
          {"lstm_hidden", c.lstm_hidden},
          {"lstm_layers", c.lstm_layers},
          {"head_width", c.head_width},
          {"variant", to_string(c.variant)},
          {"task", to_string(c.task)},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const json& doc) {
  ModelConfig c;
  c.input_width = doc.at("input_width").get<Index>();
  c.conv_channels = doc.at("conv_channels").get<std::array<Index, 3>>();
  c.lstm_hidden = doc.at("lstm_hidden").get<Index>();
  c.lstm_layers = doc.at("lstm_layers").get<Index>();
  c.head_width = doc.at("head_width").get<Index>();
  c.variant = parse_variant(doc.at("variant").get<std::string>());
  c.task = parse_task(doc.at("task").get<std::string>());
  c.seed = doc.at("seed").get<std::uint64_t>();
  return c;
}

void write_weights(const fs::path& stem, const Model& model, const json& extra) {
  if (!stem.parent_path().empty()) fs::create_directories(stem.parent_path());
  const VectorXd& flat = model.params();
  const auto bytes = static_cast<std::size_t>(flat.size()) * sizeof(double);
  {
    std::ofstream out(with_suffix(stem, ".bin"), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(bytes));
    if (!out) throw Error("io_error", stem.string() + ".bin: write failed");
  }
  json blocks = json::array();
  json order = json::array();
  for (const auto& b : model.layout().blocks()) {
    blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"offset", b.offset}});
    order.push_back(b.name);
  }
  json doc = {{"format", "marl-weights"},
              {"version", 1},
              {"dtype", "float64-le"},
              {"storage", "column-major per block"},
              {"total", model.layout().total()},
              {"model", config_to_json(model.config())},
              {"layer_order", order},
              {"blocks", blocks},
              {"data_hash", hex64(fnv1a64(flat.data(), bytes))},
              {"extra", extra}};
  std::ofstream out(with_suffix(stem, ".json"), std::ios::trunc);
  out << doc.dump(2) << '\n';
  if (!out) throw Error("io_error", stem.string() + ".json: write failed");
}

LoadedWeights read_weights(const fs::path& stem) {
  const fs::path meta_path = with_suffix(stem, ".json");
  const fs::path bin_path = with_suffix(stem, ".bin");
  std::ifstream meta(meta_path);
  if (!meta) throw Error("missing_file", meta_path.string() + ": no such file");
  json doc;
  try {
    doc = json::parse(meta);
  } catch (const json::exception& e) {
    throw Error("malformed_weights", meta_path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "marl-weights") throw Error("malformed_weights", meta_path.string() + ": wrong format tag");

  Model model(config_from_json(doc.at("model")));
  const auto& blocks = doc.at("blocks");
  if (blocks.size() != model.layout().blocks().size()) {
    throw Error("malformed_weights", meta_path.string() + ": block list does not match the model configuration");
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = model.layout().blocks()[i];
    if (blocks[i].at("name") != b.name || blocks[i].at("rows") != b.rows || blocks[i].at("cols") != b.cols) {
      throw Error("malformed_weights", meta_path.string() + ": block '" + b.name + "' does not match");
    }
  }

  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw Error("missing_file", bin_path.string() + ": no such file");
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() != static_cast<std::size_t>(model.layout().total()) * sizeof(double)) {
    throw Error("malformed_weights", bin_path.string() + ": payload length does not match the layout");
  }
  std::memcpy(model.params().data(), bytes.data(), bytes.size());
  if (doc.value("data_hash", "") != hex64(fnv1a64(bytes.data(), bytes.size()))) {
    throw Error("malformed_weights", bin_path.string() + ": payload hash mismatch");
  }
  return {std::move(model), doc.value("extra", json::object())};
}

}  // namespace marl::nn
