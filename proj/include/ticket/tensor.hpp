#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ticket {

// Dense row-major tensor of 32-bit floats (training) or 64-bit floats
// (shadow mode for the finite-difference gradient tests).
template <class T>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  TensorT(std::vector<int64_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: data length does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

  static TensorT full(std::vector<int64_t> s, T v) {
    TensorT t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // [B,C,H,W] accessor
  T& at4(int64_t b, int64_t c, int64_t h, int64_t w) {
    return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  const T& at4(int64_t b, int64_t c, int64_t h, int64_t w) const {
    return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  // [R,C] accessor
  T& at2(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  const T& at2(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

template <class T>
void require_shape(const TensorT<T>& t, const std::vector<int64_t>& want,
                   const char* what) {
  if (t.shape != want)
    throw std::invalid_argument(std::string(what) + ": expected shape " +
                                shape_str(want) + ", got " + shape_str(t.shape));
}

}  // namespace ticket
