#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

namespace dani {

// Dense row-major tensor, rank 1..4.
template <typename T>
struct Tensor {
  int rank = 0;
  std::array<int, 4> dims{1, 1, 1, 1};
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::initializer_list<int> shape) { resize(shape); }

  void resize(std::initializer_list<int> shape) {
    rank = static_cast<int>(shape.size());
    assert(rank >= 1 && rank <= 4);
    dims = {1, 1, 1, 1};
    int i = 0;
    for (int d : shape) dims[i++] = d;
    v.assign(count(), T(0));
  }

  std::size_t count() const {
    return std::size_t(dims[0]) * dims[1] * dims[2] * dims[3];
  }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T& operator[](std::size_t i) { return v[i]; }
  const T& operator[](std::size_t i) const { return v[i]; }

  void zero() { std::fill(v.begin(), v.end(), T(0)); }

  bool same_shape(const Tensor& o) const {
    return rank == o.rank && dims == o.dims;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.rank = rank;
    out.dims = dims;
    out.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using TensorF = Tensor<float>;

}  // namespace dani
