#pragma once

#include <cstdint>
#include <vector>

#include "ticket/params.hpp"

namespace ticket {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Standard Adam with bias correction. Moment arrays stay aligned with the
// ParameterSet entry order; reset() clears them (used at every rewind).
struct AdamState {
  AdamConfig cfg;
  int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const ParameterSet& params, AdamConfig cfg);
  void reset();
};

// Applies one Adam update in place. Returns false (parameters and state
// untouched) if any gradient value is non-finite.
bool adam_step(ParameterSet& params, const std::vector<Tensor>& grads,
               AdamState& state);

}  // namespace ticket
