#pragma once

#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rphoc/error.hpp"

namespace rphoc {

// Cache-line aligned storage. Vectorised reductions then sum in the same order
// on every run, whatever the heap layout.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Dense row-major tensor. Feature maps use (channels, height, width); batched
// vectors use (count, features).
template <class T>
struct Tensor {
  std::vector<int> shape;
  AlignedVector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel(shape)), fill);
  }

  static long long numel(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), 1LL, std::multiplies<long long>());
  }
  size_t size() const { return data.size(); }
  int dim(size_t i) const { return shape.at(i); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  std::span<T> row(int i) {
    const size_t stride = data.size() / static_cast<size_t>(shape[0]);
    return {data.data() + static_cast<size_t>(i) * stride, stride};
  }
  std::span<const T> row(int i) const {
    const size_t stride = data.size() / static_cast<size_t>(shape[0]);
    return {data.data() + static_cast<size_t>(i) * stride, stride};
  }
};

template <class T>
void check_rank(const Tensor<T>& t, size_t rank, const char* what) {
  if (t.shape.size() != rank || static_cast<long long>(t.data.size()) != Tensor<T>::numel(t.shape))
    throw InvalidShape(std::string(what) + ": unexpected tensor rank or size");
}

}  // namespace rphoc
