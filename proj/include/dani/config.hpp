#pragma once

#include <cstdint>
#include <string>

namespace dani {

// One flat configuration shared by every pipeline stage. Serialized as
// `key = value` lines with `#` comments; unknown keys are rejected. The same
// text is echoed into checkpoints so evaluation can re-run without the
// original file.
struct Config {
  // phantom cohort
  int grid_size = 64;
  double age_min = 63.0;
  double age_max = 87.0;
  double base_cortex_intensity = 0.85;  // c0
  double atrophy_rate_base = 0.004;     // r0, intensity/year
  double atrophy_rate_per_dx = 0.004;   // r1, intensity/year per diagnosis unit
  double ventricle_growth_base = 0.05;  // v0, voxels/year
  double ventricle_growth_per_dx = 0.05;  // v1
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;

  // conditioning / model sizes
  int bins = 10;    // A
  int latent = 64;  // s
  int regions = 32; // R

  // SVR hyperparameters
  double svr_c = 1.0;
  double svr_epsilon = 0.01;
  double svr_gamma = 1.0 / 3.0;

  // training
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool enable_p = true;
  bool enable_c = true;
  double vox_tau = 0.01;

  void validate() const;  // throws UsageError on contradictory values
  std::string serialize() const;

  static Config parse_text(const std::string& text);
  static Config parse_file(const std::string& path);

  // Applies one key/value pair; throws UsageError on unknown key or bad value.
  void apply(const std::string& key, const std::string& value);
};

}  // namespace dani
