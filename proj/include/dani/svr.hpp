#pragma once

#include <array>
#include <string>
#include <vector>

#include "dani/regions.hpp"
#include "dani/tensor.hpp"

// Per-region epsilon-SVR over (baseline age, follow-up age, diagnosis)
// predicting the regional intensity-progression ratio. Fitting solves the
// standard dual by sequential minimal optimization (maximal violating pair
// selection); features are standardized internally.

namespace dani::svr {

struct RatePair {
  double age_baseline = 0, age_followup = 0;
  int diagnosis = 0;
  double target = 1.0;  // regional ratio, <= 1 after the monotone filter
};

struct Scaler {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> std{1, 1, 1};

  std::array<double, 3> apply(double age_b, double age_f, double d) const {
    return {(age_b - mean[0]) / std[0], (age_f - mean[1]) / std[1],
            (d - mean[2]) / std[2]};
  }
};

struct RegionSvrModel {
  int region_id = -1;
  double gamma = 1.0 / 3.0;
  double c = 1.0;
  double epsilon = 0.01;
  double bias = 0.0;
  Scaler scaler;
  // support vectors in raw feature units (age_b, age_f, d) with dual
  // coefficients beta_i = alpha_i - alpha_i^*
  std::vector<std::array<double, 3>> support;
  std::vector<double> dual_coef;
  bool fitted = false;
  double dual_objective = 0.0;  // solver diagnostic, not persisted
};

// (sum late*mask + eps) / (sum early*mask + eps) with pixels mapped from
// [-1,1] to [0,1] first.
double regional_ratio(const TensorF& early, const TensorF& late,
                      const TensorF& mask, double eps = 0.1);

struct NormalizedTrajectory {
  std::vector<TensorF> slices;  // [-1,1] units, one per visit
  std::vector<double> ages;
  int diagnosis = 0;
};

// One RatePair per (subject, region, increasing visit pair); pairs whose
// target exceeds 1 are dropped (monotone filter). Returns drop bookkeeping
// through the optional out-parameters.
std::vector<std::vector<RatePair>> build_svr_dataset(
    const std::vector<NormalizedTrajectory>& trajectories,
    const regions::RegionMaskSet& masks, std::size_t* n_kept = nullptr,
    std::size_t* n_dropped = nullptr);

RegionSvrModel fit_svr(const std::vector<RatePair>& pairs, int region_id = 0,
                       double c = 1.0, double epsilon_svr = 0.01,
                       double gamma = 1.0 / 3.0);

// Kernel expansion plus bias, clamped to [0.05, 1.0].
double predict_rate(const RegionSvrModel& model, double age_baseline,
                    double age_followup, int diagnosis);

void save_models(const std::string& path, const std::vector<RegionSvrModel>& models);
std::vector<RegionSvrModel> load_models(const std::string& path);

}  // namespace dani::svr
