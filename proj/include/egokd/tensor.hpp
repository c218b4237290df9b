#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

namespace egokd {

// Dense row-major array with a runtime shape. Hot loops index the raw
// pointer directly; at() is for tests and cold paths.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
  }

  size_t numel() const { return data.size(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(T(0)); }

  T& at(int i0) { return data[static_cast<size_t>(i0)]; }
  T& at(int i0, int i1) { return data[static_cast<size_t>(i0) * shape[1] + i1]; }
  T& at(int i0, int i1, int i2) {
    return data[(static_cast<size_t>(i0) * shape[1] + i1) * shape[2] + i2];
  }
  T& at(int i0, int i1, int i2, int i3) {
    return data[((static_cast<size_t>(i0) * shape[1] + i1) * shape[2] + i2) * shape[3] + i3];
  }
  T& at(int i0, int i1, int i2, int i3, int i4) {
    return data[(((static_cast<size_t>(i0) * shape[1] + i1) * shape[2] + i2) * shape[3] + i3) *
                    shape[4] +
                i4];
  }
  const T& at(int i0) const { return const_cast<Tensor*>(this)->at(i0); }
  const T& at(int i0, int i1) const { return const_cast<Tensor*>(this)->at(i0, i1); }
  const T& at(int i0, int i1, int i2) const { return const_cast<Tensor*>(this)->at(i0, i1, i2); }
  const T& at(int i0, int i1, int i2, int i3) const {
    return const_cast<Tensor*>(this)->at(i0, i1, i2, i3);
  }
  const T& at(int i0, int i1, int i2, int i3, int i4) const {
    return const_cast<Tensor*>(this)->at(i0, i1, i2, i3, i4);
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace egokd
