#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dani/tensor.hpp"

namespace dani::preprocess {

// z-scored, clipped, tanh-range slice plus its source metadata
struct NormalizedSlice {
  TensorF pixels;  // values in [-1, 1]
  std::string subject_id;
  double age = 0.0;
  int diagnosis = 0;
};

// Uniform age bins over [age_min, age_max] with centers used both for
// conditioning interpolation and as SVR age features.
struct AgeBinning {
  int bins = 10;
  double age_min = 63.0;
  double age_max = 87.0;

  double center(int a) const {  // a is 1-based
    const double width = (age_max - age_min) / bins;
    return age_min + (a - 0.5) * width;
  }
};

// z-score to mean 0 / std 1, clip to [-3, 3], then map affinely to [-1, 1].
// Throws DataError on a constant slice.
TensorF normalize_intensity(const TensorF& slice);

// Raw phantom units [0,1] -> [-1,1] (clamped). The SVR pipeline feeds on
// slices in these calibrated units so regional ratios keep absolute
// intensity information that the per-slice z-score removes.
TensorF to_signed_units(const TensorF& slice);

// Returns (a, alpha): bin index 1..A-1 and the weight of frame a in the
// alpha*g_a + (1-alpha)*g_{a+1} blend. Ages at or past the last center clamp
// to (A-1, 0); at or before the first center to (1, 1).
std::pair<int, double> age_to_bin(double age, const AgeBinning& binning);

}  // namespace dani::preprocess
