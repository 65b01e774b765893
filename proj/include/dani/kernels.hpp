#pragma once

#include <cstddef>

// Data-parallel primitives behind the dense/conv inner loops.
//
// Every primitive has a scalar reference implementation and, on x86-64
// machines with AVX2+FMA, a vectorized variant. The backend is picked once
// at startup from CPUID and can be forced (e.g. by the equivalence tests)
// through set_backend().
//
// The two backends agree to rounding error, not bit-exactly: the vector
// variants use multiple accumulators. Within one process the selection is
// fixed, so all pipeline outputs stay deterministic.

namespace dani::kern {

enum class Backend { scalar, avx2 };

Backend active_backend();
bool backend_supported(Backend b);
// Returns false (and keeps the current backend) if unsupported on this CPU.
bool set_backend(Backend b);
const char* backend_name(Backend b);

// y[i] += a * x[i]
void axpy(float a, const float* x, float* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);

// sum_i a[i] * b[i]
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// scalar reference implementations, always available
namespace scalar {
template <typename T>
inline void axpy(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
}  // namespace scalar

}  // namespace dani::kern
