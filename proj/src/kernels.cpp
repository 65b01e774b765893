#include "dani/kernels.hpp"

#if DANI_HAVE_AVX2_TU
#include "dani/kernels/avx2.hpp"
#endif

namespace dani::kern {

namespace {

struct Table {
  void (*axpy_f32)(float, const float*, float*, std::size_t);
  void (*axpy_f64)(double, const double*, double*, std::size_t);
  float (*dot_f32)(const float*, const float*, std::size_t);
  double (*dot_f64)(const double*, const double*, std::size_t);
};

constexpr Table kScalar = {
    &scalar::axpy<float>, &scalar::axpy<double>,
    &scalar::dot<float>, &scalar::dot<double>};

#if DANI_HAVE_AVX2_TU
constexpr Table kAvx2 = {
    &avx2::axpy_f32, &avx2::axpy_f64, &avx2::dot_f32, &avx2::dot_f64};
#endif

bool cpu_has_avx2() {
#if DANI_HAVE_AVX2_TU && defined(__x86_64__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend g_backend = cpu_has_avx2() ? Backend::avx2 : Backend::scalar;

const Table& table() {
#if DANI_HAVE_AVX2_TU
  return g_backend == Backend::avx2 ? kAvx2 : kScalar;
#else
  return kScalar;
#endif
}

}  // namespace

Backend active_backend() { return g_backend; }

bool backend_supported(Backend b) {
  return b == Backend::scalar || (b == Backend::avx2 && cpu_has_avx2());
}

bool set_backend(Backend b) {
  if (!backend_supported(b)) return false;
  g_backend = b;
  return true;
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

void axpy(float a, const float* x, float* y, std::size_t n) {
  table().axpy_f32(a, x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
  table().axpy_f64(a, x, y, n);
}
float dot(const float* a, const float* b, std::size_t n) {
  return table().dot_f32(a, b, n);
}
double dot(const double* a, const double* b, std::size_t n) {
  return table().dot_f64(a, b, n);
}

}  // namespace dani::kern
