#pragma once

#include <cmath>

#include "ticket/tensor.hpp"

namespace ticket::kernels::detail {

// Fixed-order dot product: four lane accumulators over i%4, combined as
// ((s0+s1)+(s2+s3)) + tail. Both backends use this exact order.
template <class T>
inline T dot_lanes(const T* a, const T* b, int64_t n) {
  T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

// y[0..n) += c * a[0..n)
template <class T>
inline void axpy(T c, const T* a, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += c * a[i];
}

// Zero-padded copy of one [H,W] channel plane into a [H+2,W+2] buffer.
template <class T>
inline void pad_plane(const T* src, T* dst, int64_t h, int64_t w) {
  const int64_t wp = w + 2;
  for (int64_t x = 0; x < wp; ++x) dst[x] = 0;
  for (int64_t y = 0; y < h; ++y) {
    T* row = dst + (y + 1) * wp;
    row[0] = 0;
    for (int64_t x = 0; x < w; ++x) row[1 + x] = src[y * w + x];
    row[w + 1] = 0;
  }
  for (int64_t x = 0; x < wp; ++x) dst[(h + 1) * wp + x] = 0;
}

template <class T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace ticket::kernels::detail
