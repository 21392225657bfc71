#include "ticket/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace ticket {

AdamState AdamState::init(const ParameterSet& params, AdamConfig cfg) {
  AdamState s;
  s.cfg = cfg;
  s.step = 0;
  s.m.reserve(params.entries.size());
  s.v.reserve(params.entries.size());
  for (const auto& e : params.entries) {
    s.m.emplace_back(e.value.shape);
    s.v.emplace_back(e.value.shape);
  }
  return s;
}

void AdamState::reset() {
  step = 0;
  for (auto& t : m)
    for (auto& x : t.data) x = 0.0f;
  for (auto& t : v)
    for (auto& x : t.data) x = 0.0f;
}

bool adam_step(ParameterSet& params, const std::vector<Tensor>& grads,
               AdamState& state) {
  if (grads.size() != params.entries.size() || state.m.size() != grads.size())
    throw std::invalid_argument("adam_step: gradient/state misalignment");
  for (size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape != params.entries[i].value.shape)
      throw std::invalid_argument("adam_step: gradient shape mismatch for " +
                                  params.entries[i].name);
    for (float g : grads[i].data)
      if (!std::isfinite(g)) return false;
  }

  state.step += 1;
  const auto& c = state.cfg;
  const float bc1 = 1.0f - std::pow(c.beta1, static_cast<float>(state.step));
  const float bc2 = 1.0f - std::pow(c.beta2, static_cast<float>(state.step));

  for (size_t i = 0; i < grads.size(); ++i) {
    float* p = params.entries[i].value.data.data();
    const float* g = grads[i].data.data();
    float* m = state.m[i].data.data();
    float* v = state.v[i].data.data();
    const int64_t n = grads[i].numel();
    for (int64_t j = 0; j < n; ++j) {
      m[j] = c.beta1 * m[j] + (1.0f - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0f - c.beta2) * g[j] * g[j];
      const float mh = m[j] / bc1;
      const float vh = v[j] / bc2;
      p[j] -= c.lr * mh / (std::sqrt(vh) + c.eps);
    }
  }
  return true;
}

}  // namespace ticket
