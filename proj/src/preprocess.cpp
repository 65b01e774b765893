#include "dani/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "dani/error.hpp"

namespace dani::preprocess {

TensorF normalize_intensity(const TensorF& slice) {
  const std::size_t n = slice.count();
  if (n == 0) throw DataError("normalize_intensity: empty slice");
  double mean = 0.0;
  for (float p : slice.v) mean += p;
  mean /= double(n);
  double var = 0.0;
  for (float p : slice.v) {
    const double d = p - mean;
    var += d * d;
  }
  var /= double(n);
  if (var <= 0.0)
    throw DataError("normalize_intensity: constant slice (zero variance)");
  const double inv_std = 1.0 / std::sqrt(var);

  TensorF out = slice;
  for (auto& p : out.v) {
    double z = (double(p) - mean) * inv_std;
    z = std::clamp(z, -3.0, 3.0);
    p = float(z / 3.0);
  }
  return out;
}

TensorF to_signed_units(const TensorF& slice) {
  TensorF out = slice;
  for (auto& p : out.v) p = std::clamp(p, 0.0f, 1.0f) * 2.0f - 1.0f;
  return out;
}

std::pair<int, double> age_to_bin(double age, const AgeBinning& binning) {
  if (age < binning.age_min - 1e-9 || age > binning.age_max + 1e-9)
    throw DataError("age_to_bin: age outside [age_min, age_max]");
  const int A = binning.bins;
  if (age <= binning.center(1)) return {1, 1.0};
  if (age >= binning.center(A)) return {A - 1, 0.0};
  const double width = (binning.age_max - binning.age_min) / A;
  int a = 1 + int((age - binning.center(1)) / width);
  a = std::clamp(a, 1, A - 1);
  // guard against boundary rounding
  while (a > 1 && age < binning.center(a)) --a;
  while (a < A - 1 && age >= binning.center(a + 1)) ++a;
  const double alpha = (binning.center(a + 1) - age) / (binning.center(a + 1) - binning.center(a));
  return {a, alpha};
}

}  // namespace dani::preprocess
