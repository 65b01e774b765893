#pragma once

#include <cstddef>

// Declarations for the AVX2 translation unit (compiled with -mavx2 -mfma).
// Only linked when the toolchain supports the flags; callers go through the
// dispatch table in kernels.cpp and never call these directly.

namespace dani::kern::avx2 {

void axpy_f32(float a, const float* x, float* y, std::size_t n);
void axpy_f64(double a, const double* x, double* y, std::size_t n);
float dot_f32(const float* a, const float* b, std::size_t n);
double dot_f64(const double* a, const double* b, std::size_t n);

}  // namespace dani::kern::avx2
