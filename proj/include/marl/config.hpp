#pragma once

#include "marl/fuzzy_seg.hpp"
#include "marl/nn/model.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>

namespace marl {

/// Generative model of the synthetic cohort. Each visit gets one phantom
/// slice: air outside an elliptical body (soft tissue), two elliptical lungs
/// inside it, additive Gaussian noise. FVC is an affine function of lung
/// area, body area, age, sex and smoking status plus bounded uniform noise.
struct SynthSpec {
  std::uint64_t seed = 7;
  int n_patients = 64;
  int visits_min = 3;
  int visits_max = 8;
  double noise_sigma = 30.0;  // HU
  int image_size = 128;

  // FVC (ml) = intercept + lung_coef * lung_area + body_coef * body_area
  //          + age_coef * age + sex/smoking offsets + U(-fvc_noise, fvc_noise)
  double fvc_intercept = 1250.0;
  double fvc_lung_coef = 0.85;   // ml per lung pixel
  double fvc_body_coef = 0.11;   // ml per body pixel
  double fvc_age_coef = -14.0;   // ml per year
  double fvc_female = -250.0;
  double fvc_smoker = -300.0;
  double fvc_ex_smoker = -150.0;
  double fvc_noise = 25.0;

  // Reference FVC for the percent column:
  //   ref_male/female + ref_age_coef * (age - 65) + ref_body_coef * (body area - ref_body_area)
  // where body area is the analytic ellipse area in pixels. Larger bodies get
  // larger reference volumes, as height does in clinical reference equations.
  double ref_male = 3300.0;
  double ref_female = 2700.0;
  double ref_age_coef = -15.0;
  double ref_body_coef = 0.15;
  double ref_body_area = 7300.0;
};

struct IngestConfig {
  int size = 128;
  double window_low = -1024.0;
  double window_high = 400.0;
};

struct PrepareConfig {
  int t_max = 8;
  std::array<double, 3> split = {0.70, 0.15, 0.15};
  std::uint64_t seed = 7;
};

struct TrainConfig {
  nn::Task task = nn::Task::regress;
  nn::Variant variant = nn::Variant::v1;
  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 7;
  Index lstm_hidden = 32;
  Index head_width = 64;
  std::array<Index, 3> conv_channels = {8, 16, 32};
};

/// The single configuration document shared by every CLI stage. Every section
/// is optional; unknown keys are rejected.
struct Config {
  SynthSpec synth;
  IngestConfig ingest;
  SegmentOptions segment;
  PrepareConfig prepare;
  TrainConfig train;
};

Config config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const Config& config);
Config load_config(const std::filesystem::path& path);

void validate(const SynthSpec& spec);
void validate(const TrainConfig& config);
void validate_split(const std::array<double, 3>& fractions);

}  // namespace marl
