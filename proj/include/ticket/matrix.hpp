#pragma once

#include <cstdint>
#include <vector>

namespace ticket {

// Small dense row-major double matrix used by the similarity pipeline.
struct Matrix2D {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> data;

  Matrix2D() = default;
  Matrix2D(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0) {}
  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }
  const double* row(int64_t r) const { return data.data() + r * cols; }
};

}  // namespace ticket
