#include "ticket/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ticket {

void PruneSchedule::validate(int module_count) const {
  if (!(p > 0.0)) throw std::invalid_argument("prune schedule: p must be > 0");
  if (q < 0.0) throw std::invalid_argument("prune schedule: q must be >= 0");
  if (!(p + (module_count - 1) * q < 100.0))
    throw std::invalid_argument("prune schedule: p + (J-1)q must stay below 100%");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("prune schedule: delta must lie in (0,1)");
  if (!(rewind_fraction >= 0.0 && rewind_fraction < 1.0))
    throw std::invalid_argument("prune schedule: rewind fraction must lie in [0,1)");
  if (iters_per_round < 1 || max_rounds < 1)
    throw std::invalid_argument("prune schedule: iteration and round budgets must be >= 1");
}

double sparsity(const MaskSet& mask, const ParameterSet& params) {
  check_aligned(params, mask);
  const int64_t size = mask.size();
  return 1.0 - static_cast<double>(mask.ones()) / static_cast<double>(size);
}

double module_sparsity(const MaskEntry& e) {
  return 1.0 - static_cast<double>(e.ones()) / static_cast<double>(e.size());
}

void prune_module(const Tensor& weights, MaskEntry& mask, double ratio_pct) {
  if (!(ratio_pct > 0.0 && ratio_pct < 100.0))
    throw std::invalid_argument("prune_module: ratio must lie in (0,100)");
  if (weights.numel() != mask.size())
    throw std::invalid_argument("prune_module: weight/mask size mismatch");

  std::vector<int64_t> unmasked;
  unmasked.reserve(static_cast<size_t>(mask.size()));
  for (int64_t i = 0; i < mask.size(); ++i)
    if (mask.bits[static_cast<size_t>(i)]) unmasked.push_back(i);

  const int64_t k = static_cast<int64_t>(
      std::floor(ratio_pct * static_cast<double>(unmasked.size()) / 100.0));
  if (k <= 0) return;

  // smallest |value| first; ties by ascending flat index
  auto cmp = [&](int64_t a, int64_t b) {
    const float ma = std::fabs(weights[a]), mb = std::fabs(weights[b]);
    if (ma != mb) return ma < mb;
    return a < b;
  };
  std::nth_element(unmasked.begin(), unmasked.begin() + (k - 1), unmasked.end(), cmp);
  for (int64_t i = 0; i < k; ++i)
    mask.bits[static_cast<size_t>(unmasked[static_cast<size_t>(i)])] = 0;
}

void apply_mask(ParameterSet& params, const MaskSet& mask) {
  check_aligned(params, mask);
  size_t mi = 0;
  for (auto& e : params.entries) {
    if (e.role != ParamRole::PrunableWeight) continue;
    const auto& me = mask.entries[mi++];
    for (int64_t i = 0; i < e.value.numel(); ++i)
      if (!me.bits[static_cast<size_t>(i)]) e.value[i] = 0.0f;
  }
}

void rewind(ParameterSet& params, const RewindSnapshot& snapshot,
            const MaskSet& mask, AdamState* adam) {
  if (snapshot.params.entries.size() != params.entries.size())
    throw std::invalid_argument("rewind: snapshot/parameter misalignment");
  for (size_t i = 0; i < params.entries.size(); ++i) {
    const auto& se = snapshot.params.entries[i];
    auto& pe = params.entries[i];
    if (se.name != pe.name || se.value.shape != pe.value.shape)
      throw std::invalid_argument("rewind: snapshot entry mismatch at " + pe.name);
    pe.value = se.value;
  }
  apply_mask(params, mask);
  if (adam) adam->reset();
}

double train_segment(const UNetConfig& cfg, ParameterSet& params,
                     const MaskSet& mask, const NoiseSchedule& ns,
                     BatchStream& batches, Rng& noise_rng, AdamState& adam,
                     int iterations, int snapshot_at, ParameterSet* snapshot_out,
                     bool* ok, std::string* diag) {
  *ok = true;
  if (snapshot_at == 0 && snapshot_out) *snapshot_out = params;
  double loss_sum = 0.0;
  for (int it = 1; it <= iterations; ++it) {
    const Tensor batch = batches.next();
    LossResult lr = training_loss(cfg, params, mask, batch, ns, noise_rng);
    if (!std::isfinite(lr.loss)) {
      *ok = false;
      if (diag) *diag = "non-finite loss at iteration " + std::to_string(it);
      return loss_sum / std::max(1, it - 1);
    }
    if (!adam_step(params, lr.grads, adam)) {
      *ok = false;
      if (diag) *diag = "non-finite gradient at iteration " + std::to_string(it);
      return loss_sum / std::max(1, it - 1);
    }
    loss_sum += lr.loss;
    if (it == snapshot_at && snapshot_out) *snapshot_out = params;
  }
  return loss_sum / std::max(1, iterations);
}

TicketResult find_winning_ticket(const TicketOptions& opt, const Dataset& data,
                                 const RoundCallback& on_round) {
  opt.model.validate();
  ParameterSet params = unet_init(opt.model, opt.seed);
  MaskSet mask = MaskSet::ones_like(params);
  const int J = params.module_count();
  opt.prune.validate(J);

  TicketResult res;
  res.snapshot.round = 0;
  AdamState adam = AdamState::init(params, opt.train.adam);
  const int tau = static_cast<int>(std::floor(opt.prune.rewind_fraction *
                                              opt.prune.iters_per_round));

  Tensor reference;
  if (opt.quality_samples > 0) {
    const int64_t nref =
        std::min<int64_t>(opt.quality_reference, data.count());
    reference = Tensor({nref, data.images.dim(1), data.images.dim(2),
                        data.images.dim(3)});
    std::copy_n(data.images.data.begin(),
                static_cast<size_t>(reference.numel()), reference.data.begin());
  }

  int round = 0;
  while (sparsity(mask, params) < opt.prune.delta && round < opt.prune.max_rounds) {
    round += 1;
    const bool capture = opt.prune.snapshot_mode == PruneSchedule::SnapshotMode::PerRound ||
                         round == 1;

    RoundReport rep;
    rep.round = round;
    rep.trained_sparsity = sparsity(mask, params);
    for (const auto& me : mask.entries) rep.per_module_trained.push_back(module_sparsity(me));
    rep.flops_saving = count_flops(opt.model, mask).weight_saving();

    BatchStream batches(data, opt.train.batch_size,
                        Rng(opt.seed, "shuffle", static_cast<uint64_t>(round)));
    Rng noise(opt.seed, "noise", static_cast<uint64_t>(round));
    bool ok = true;
    std::string diag;
    ParameterSet snap;
    rep.mean_loss = train_segment(opt.model, params, mask, opt.schedule, batches,
                                  noise, adam, opt.prune.iters_per_round,
                                  capture ? tau : -1, capture ? &snap : nullptr,
                                  &ok, &diag);
    if (!ok) {
      res.aborted = true;
      res.abort_reason = "round " + std::to_string(round) + ": " + diag;
      break;
    }
    if (capture) {
      res.snapshot.params = std::move(snap);
      res.snapshot.round = round;
      res.snapshot.step = tau;
    }
    res.last_good = params;

    if (opt.quality_samples > 0) {
      SampleOptions so;
      so.count = opt.quality_samples;
      so.seed = Rng::fnv1a64("quality") ^ opt.seed ^ static_cast<uint64_t>(round);
      const SampleResult sr = sample(opt.model, params, mask, opt.schedule, so);
      rep.mmd2 = mmd2(sr.images, reference);
      rep.frechet = frechet_gaussian(sr.images, reference);
    } else {
      rep.mmd2 = std::numeric_limits<double>::quiet_NaN();
      rep.frechet = std::numeric_limits<double>::quiet_NaN();
    }

    // Alg. 1 lines 4-6: per-module graded pruning of the trained weights
    const MaskSet trained_mask = mask;
    for (int j = 0; j < J; ++j) {
      const auto& w =
          params.entries[static_cast<size_t>(params.prunable_entry(j))].value;
      prune_module(w, mask.by_module(j), opt.prune.ratio_for(j));
    }
    rep.pruned_sparsity = sparsity(mask, params);
    for (const auto& me : mask.entries) rep.per_module_pruned.push_back(module_sparsity(me));

    // Alg. 1 line 8: rewind surviving weights to theta_tau
    rewind(params, res.snapshot, mask, &adam);

    res.rounds.push_back(rep);
    if (on_round) on_round(rep, res.last_good, trained_mask, mask, res.snapshot);
  }

  res.mask = mask;
  res.final_sparsity = sparsity(mask, params);
  res.reached_delta = res.final_sparsity >= opt.prune.delta;
  res.overshoot = std::max(0.0, res.final_sparsity - opt.prune.delta);
  res.ticket_params = params;  // already rewound + masked
  return res;
}

}  // namespace ticket
