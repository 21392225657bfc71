#pragma once

#include <cstdint>
#include <vector>

#include "ticket/mask.hpp"
#include "ticket/params.hpp"
#include "ticket/rng.hpp"
#include "ticket/unet.hpp"

namespace ticket {

// Variance schedule beta_1..beta_T with the derived alpha_t = 1 - beta_t and
// cumulative products alpha_bar_t. Index 0 of the vectors is t=1.
struct NoiseSchedule {
  int timesteps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  // beta_t linearly interpolated from beta_start to beta_end inclusive
  static NoiseSchedule linear(int timesteps, double beta_start, double beta_end);

  double beta_at(int t) const { return beta[static_cast<size_t>(t - 1)]; }
  double alpha_at(int t) const { return alpha[static_cast<size_t>(t - 1)]; }
  double alpha_bar_at(int t) const { return alpha_bar[static_cast<size_t>(t - 1)]; }
  void check_t(int t) const;
};

// Closed-form forward corruption x_t = sqrt(ab_t) x0 + sqrt(1-ab_t) eps,
// per batch element (t may differ across the batch).
Tensor q_sample(const Tensor& x0, const std::vector<int>& t, const Tensor& eps,
                const NoiseSchedule& ns);

struct LossResult {
  float loss = 0.0f;
  std::vector<Tensor> grads;  // aligned with params.entries; masked positions exactly 0
};

// One training objective evaluation: draws t ~ U[1,T] and eps ~ N(0,I) per
// batch element from `noise_rng` (interleaved per element: t_b then eps_b),
// forms x_t, and returns ||eps - eps_theta(x_t,t)||^2 / N with gradients.
LossResult training_loss(const UNetConfig& cfg, const ParameterSet& params,
                         const MaskSet& mask, const Tensor& x0_batch,
                         const NoiseSchedule& ns, Rng& noise_rng);

struct SampleOptions {
  int count = 16;
  uint64_t seed = 0;
  int batch = 64;                  // network batch while sampling
  std::vector<int> trajectory_at;  // t values whose x_t to record (descending)
};

struct SampleResult {
  Tensor images;                    // [n,C,H,W], clamped to [-1,1]
  std::vector<Tensor> trajectory;   // one [n,C,H,W] tensor per requested t
};

// Ancestral sampler: x_T ~ N(0,I), then for t = T..1
//   x_{t-1} = (x_t - beta_t/sqrt(1-ab_t) eps_theta) / sqrt(alpha_t) + sqrt(beta_t) z
// with z = 0 at the final step. Every noise value for image i comes from the
// stream ("sample", i), so results do not depend on the sampling batch size.
SampleResult sample(const UNetConfig& cfg, const ParameterSet& params,
                    const MaskSet& mask, const NoiseSchedule& ns,
                    const SampleOptions& opt);

}  // namespace ticket
