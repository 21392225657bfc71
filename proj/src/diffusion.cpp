#include "ticket/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ticket/autodiff.hpp"

namespace ticket {

NoiseSchedule NoiseSchedule::linear(int timesteps, double beta_start,
                                    double beta_end) {
  if (timesteps < 1)
    throw std::invalid_argument("noise schedule: need at least one step");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("noise schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule ns;
  ns.timesteps = timesteps;
  ns.beta.resize(static_cast<size_t>(timesteps));
  ns.alpha.resize(static_cast<size_t>(timesteps));
  ns.alpha_bar.resize(static_cast<size_t>(timesteps));
  double prod = 1.0;
  for (int i = 0; i < timesteps; ++i) {
    const double frac = timesteps == 1 ? 0.0 : static_cast<double>(i) / (timesteps - 1);
    const double b = beta_start + (beta_end - beta_start) * frac;
    ns.beta[static_cast<size_t>(i)] = b;
    ns.alpha[static_cast<size_t>(i)] = 1.0 - b;
    prod *= 1.0 - b;
    ns.alpha_bar[static_cast<size_t>(i)] = prod;
  }
  return ns;
}

void NoiseSchedule::check_t(int t) const {
  if (t < 1 || t > timesteps)
    throw std::out_of_range("diffusion: t=" + std::to_string(t) +
                            " outside [1," + std::to_string(timesteps) + "]");
}

Tensor q_sample(const Tensor& x0, const std::vector<int>& t, const Tensor& eps,
                const NoiseSchedule& ns) {
  if (!x0.same_shape(eps))
    throw std::invalid_argument("q_sample: eps shape " + shape_str(eps.shape) +
                                " does not match x0 " + shape_str(x0.shape));
  const int64_t B = x0.dim(0);
  if (static_cast<int64_t>(t.size()) != B)
    throw std::invalid_argument("q_sample: t batch size mismatch");
  Tensor out(x0.shape);
  const int64_t per = x0.numel() / B;
  for (int64_t b = 0; b < B; ++b) {
    ns.check_t(t[static_cast<size_t>(b)]);
    const double ab = ns.alpha_bar_at(t[static_cast<size_t>(b)]);
    const float s = static_cast<float>(std::sqrt(ab));
    const float n = static_cast<float>(std::sqrt(1.0 - ab));
    const float* x = &x0.data[static_cast<size_t>(b * per)];
    const float* e = &eps.data[static_cast<size_t>(b * per)];
    float* o = &out.data[static_cast<size_t>(b * per)];
    for (int64_t i = 0; i < per; ++i) o[i] = s * x[i] + n * e[i];
  }
  return out;
}

LossResult training_loss(const UNetConfig& cfg, const ParameterSet& params,
                         const MaskSet& mask, const Tensor& x0_batch,
                         const NoiseSchedule& ns, Rng& noise_rng) {
  const int64_t B = x0_batch.dim(0);
  const int64_t per = x0_batch.numel() / B;

  // per element: t first, then its noise
  std::vector<int> t(static_cast<size_t>(B));
  Tensor eps(x0_batch.shape);
  for (int64_t b = 0; b < B; ++b) {
    t[static_cast<size_t>(b)] =
        1 + static_cast<int>(noise_rng.next_below(static_cast<uint64_t>(ns.timesteps)));
    for (int64_t i = 0; i < per; ++i)
      eps.data[static_cast<size_t>(b * per + i)] = noise_rng.normal_f();
  }
  const Tensor x_t = q_sample(x0_batch, t, eps, ns);

  Tape tape;
  tape.reserve(params.entries.size() + 40);
  const auto h = unet_forward(tape, cfg, params, mask, x_t, t, ns.timesteps);
  const auto target = tape.leaf(std::move(eps), false);
  const auto loss_id = tape.mse_loss(h.out, target);
  tape.backward(loss_id);

  LossResult res;
  res.loss = tape.value(loss_id)[0];
  res.grads.reserve(params.entries.size());
  size_t mi = 0;
  for (size_t i = 0; i < params.entries.size(); ++i) {
    Tensor g = tape.grad(h.param_leaves[i]);
    if (params.entries[i].role == ParamRole::PrunableWeight) {
      const auto& me = mask.entries[mi++];
      for (int64_t j = 0; j < g.numel(); ++j)
        if (!me.bits[static_cast<size_t>(j)]) g[j] = 0.0f;
    }
    res.grads.push_back(std::move(g));
  }
  return res;
}

SampleResult sample(const UNetConfig& cfg, const ParameterSet& params,
                    const MaskSet& mask, const NoiseSchedule& ns,
                    const SampleOptions& opt) {
  if (opt.count < 1) throw std::invalid_argument("sample: count must be >= 1");
  const int64_t C = cfg.channels, S = cfg.image_size;
  const int64_t per = C * S * S;
  SampleResult res;
  res.images = Tensor({opt.count, C, S, S});
  for (int tv : opt.trajectory_at) res.trajectory.emplace_back(Tensor({opt.count, C, S, S}));

  for (int64_t start = 0; start < opt.count; start += opt.batch) {
    const int64_t n = std::min<int64_t>(opt.batch, opt.count - start);
    // one independent noise stream per image
    std::vector<Rng> streams;
    streams.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
      streams.emplace_back(opt.seed, "sample", static_cast<uint64_t>(start + i + 1));

    Tensor x({n, C, S, S});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < per; ++j)
        x.data[static_cast<size_t>(i * per + j)] = streams[static_cast<size_t>(i)].normal_f();

    // record x_tv (tv in [0, T]; tv = T is the initial noise)
    auto record = [&](int tv) {
      for (size_t k = 0; k < opt.trajectory_at.size(); ++k) {
        if (opt.trajectory_at[k] != tv) continue;
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < per; ++j)
            res.trajectory[k].data[static_cast<size_t>((start + i) * per + j)] =
                x.data[static_cast<size_t>(i * per + j)];
      }
    };
    record(ns.timesteps);

    for (int t = ns.timesteps; t >= 1; --t) {
      const std::vector<int> tb(static_cast<size_t>(n), t);
      const Tensor eps_hat = predict_noise(cfg, params, mask, x, tb, ns.timesteps);
      const double a = ns.alpha_at(t);
      const double ab = ns.alpha_bar_at(t);
      const double b = ns.beta_at(t);
      const float inv_sqrt_a = static_cast<float>(1.0 / std::sqrt(a));
      const float coef = static_cast<float>(b / std::sqrt(1.0 - ab));
      const float sigma = static_cast<float>(std::sqrt(b));
      for (int64_t i = 0; i < n; ++i) {
        float* xi = &x.data[static_cast<size_t>(i * per)];
        const float* ei = &eps_hat.data[static_cast<size_t>(i * per)];
        for (int64_t j = 0; j < per; ++j) {
          float mu = inv_sqrt_a * (xi[j] - coef * ei[j]);
          if (t > 1) mu += sigma * streams[static_cast<size_t>(i)].normal_f();
          xi[j] = mu;
        }
      }
      record(t - 1);
    }
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < per; ++j)
        res.images.data[static_cast<size_t>((start + i) * per + j)] =
            std::clamp(x.data[static_cast<size_t>(i * per + j)], -1.0f, 1.0f);
  }
  return res;
}

}  // namespace ticket
