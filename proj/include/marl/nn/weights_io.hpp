#pragma once

#include "marl/nn/model.hpp"

#include <json.hpp>

#include <filesystem>

namespace marl::nn {

/// Weight file pair: `<stem>.bin` holds the flat parameter vector as 64-bit
/// little-endian reals; `<stem>.json` holds the block layout, model
/// configuration and a hash of the payload. `extra` is stored verbatim under
/// the "extra" key.
void write_weights(const std::filesystem::path& stem, const Model& model, const nlohmann::json& extra = {});

struct LoadedWeights {
  Model model;
  nlohmann::json extra;
};

LoadedWeights read_weights(const std::filesystem::path& stem);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& doc);

}  // namespace marl::nn
