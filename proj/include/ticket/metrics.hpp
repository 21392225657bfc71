#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ticket/mask.hpp"
#include "ticket/tensor.hpp"
#include "ticket/unet.hpp"

namespace ticket {

// Exact per-module density as a count pair, so FLOPs savings can be computed
// in integer arithmetic.
struct Density {
  uint64_t ones = 1;
  uint64_t total = 1;
  double value() const { return static_cast<double>(ones) / static_cast<double>(total); }
};

// FLOPs for one forward pass at batch 1. Convention: 1 multiply-accumulate
// = 2 FLOPs (stated in every report header). conv2d: 2*HW*Cout*Cin*9 plus
// HW*Cout bias adds; linear: 2*Dout*Din + Dout; pooling / upsampling /
// activations / elementwise adds: 1 FLOP per output element. Sparse mode
// scales each weight-bearing op by its module density.
struct FlopsReport {
  struct Row {
    int module = -1;
    std::string name;
    uint64_t dense = 0;
    Density density;
    double effective = 0.0;  // dense * density
  };
  std::vector<Row> rows;          // weight-bearing ops, one per module
  uint64_t elementwise_dense = 0; // non-weight ops (density always 1)
  bool exact_saving = true;       // integer path succeeded

  uint64_t weight_dense_total() const;
  double weight_effective_total() const;
  uint64_t dense_total() const { return weight_dense_total() + elementwise_dense; }
  double effective_total() const {
    return weight_effective_total() + static_cast<double>(elementwise_dense);
  }
  // 1 - effective/dense over weight-bearing ops only; exact rational when
  // the integer path holds (it does for any realistic config).
  double weight_saving() const { return weight_saving_; }
  double total_saving() const { return 1.0 - effective_total() / static_cast<double>(dense_total()); }

  std::string pretty() const;

  double weight_saving_ = 0.0;  // filled by count_flops
};

FlopsReport count_flops(const UNetConfig& cfg);
FlopsReport count_flops(const UNetConfig& cfg, const MaskSet& mask);
FlopsReport count_flops(const UNetConfig& cfg, std::span<const Density> densities);

// Biased squared MMD with an RBF kernel:
//   mean k(x,x') + mean k(y,y') - 2 mean k(x,y)
// (diagonal terms included). Bandwidth defaults to the median of the nonzero
// pairwise distances of the pooled set. Rows are whole images flattened to
// pixel vectors. `degenerate` flags an all-identical pooled set (kernel
// falls back to all-ones).
double mmd2(const Tensor& x, const Tensor& y,
            std::optional<double> bandwidth = std::nullopt,
            bool* degenerate = nullptr);

// Frechet distance between diagonal-covariance Gaussian fits of the two
// pixel-vector sets: ||mu_x - mu_y||^2 + sum_d (sqrt(vx_d) - sqrt(vy_d))^2.
// Variances are population (1/N) moments, floored at 0.
double frechet_gaussian(const Tensor& x, const Tensor& y);

struct QualityScore {
  double mmd2 = 0.0;
  double frechet = 0.0;
  int64_t generated = 0;
  int64_t reference = 0;
  uint64_t seed = 0;
};

}  // namespace ticket
