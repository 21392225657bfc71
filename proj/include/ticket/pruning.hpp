#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ticket/adam.hpp"
#include "ticket/data.hpp"
#include "ticket/diffusion.hpp"
#include "ticket/mask.hpp"
#include "ticket/metrics.hpp"
#include "ticket/params.hpp"
#include "ticket/unet.hpp"

namespace ticket {

// Graded iterative magnitude pruning schedule: module j is pruned at
// (p + j*q)% of its *remaining* weights each round, until global sparsity
// reaches delta or the round budget runs out.
struct PruneSchedule {
  double p = 20.0;  // base ratio, percent
  double q = 1.0;   // increment per module index, percent
  double delta = 0.99;
  double rewind_fraction = 0.05;
  int iters_per_round = 2000;
  int max_rounds = 25;
  // theta_tau captured during round 1 and reused (default), or re-captured
  // every round.
  enum class SnapshotMode { Round1, PerRound } snapshot_mode = SnapshotMode::Round1;

  double ratio_for(int module) const { return p + module * q; }
  void validate(int module_count) const;
};

// 1 - ones/size over the prunable positions.
double sparsity(const MaskSet& mask, const ParameterSet& params);
double module_sparsity(const MaskEntry& e);

// Zeroes the floor(ratio_pct% * remaining) unmasked entries of smallest
// magnitude; ties broken by ascending flat index. The count is computed as
// floor(ratio_pct * remaining / 100).
void prune_module(const Tensor& weights, MaskEntry& mask, double ratio_pct);

// Sets masked positions of prunable arrays to exactly zero.
void apply_mask(ParameterSet& params, const MaskSet& mask);

struct RewindSnapshot {
  ParameterSet params;
  int round = 0;    // round whose training produced it
  int64_t step = 0; // tau: optimizer steps taken before the capture
};

// Restores params from the snapshot (prunable arrays masked, everything else
// verbatim) and resets the optimizer state if given.
void rewind(ParameterSet& params, const RewindSnapshot& snapshot,
            const MaskSet& mask, AdamState* adam);

struct TrainOptions {
  int batch_size = 64;
  AdamConfig adam;
};

// Trains in place for `iterations` steps; draws batches from `batches` and
// noise from `noise_rng`; gradients are masked, so masked weights stay at
// exactly zero. If snapshot_at >= 0, *snapshot_out receives a bit-exact copy
// of the parameters after that many optimizer steps. Returns mean loss; sets
// *ok=false and stops early on a non-finite loss or gradient.
double train_segment(const UNetConfig& cfg, ParameterSet& params,
                     const MaskSet& mask, const NoiseSchedule& ns,
                     BatchStream& batches, Rng& noise_rng, AdamState& adam,
                     int iterations, int snapshot_at, ParameterSet* snapshot_out,
                     bool* ok, std::string* diag = nullptr);

struct RoundReport {
  int round = 1;
  double trained_sparsity = 0.0;  // sparsity of the mask this round trained with
  std::vector<double> per_module_trained;
  double mean_loss = 0.0;
  double mmd2 = 0.0;     // quality of the trained model (NaN if not evaluated)
  double frechet = 0.0;
  double flops_saving = 0.0;  // weight-bearing saving of the trained mask
  double pruned_sparsity = 0.0;  // global sparsity after this round's pruning
  std::vector<double> per_module_pruned;
};

struct TicketOptions {
  UNetConfig model;
  NoiseSchedule schedule;
  PruneSchedule prune;
  TrainOptions train;
  int quality_samples = 128;  // images generated per round; 0 disables
  int quality_reference = 512;
  uint64_t seed = 0;
};

struct TicketResult {
  MaskSet mask;
  RewindSnapshot snapshot;
  std::vector<RoundReport> rounds;
  ParameterSet ticket_params;  // theta_tau with the final mask applied
  double final_sparsity = 0.0;
  bool reached_delta = false;
  double overshoot = 0.0;  // final_sparsity - delta when positive
  bool aborted = false;
  std::string abort_reason;
  ParameterSet last_good;  // trained params from the last completed round
};

// Full iterative loop: { train i iterations -> measure -> prune each module
// at (p + j q)% -> rewind to theta_tau } while global sparsity < delta and
// rounds remain. Round r draws from substreams ("noise", r) / ("shuffle", r)
// of the run seed.
using RoundCallback = std::function<void(
    const RoundReport&, const ParameterSet& trained, const MaskSet& trained_mask,
    const MaskSet& pruned_mask, const RewindSnapshot& snapshot)>;

TicketResult find_winning_ticket(const TicketOptions& opt, const Dataset& data,
                                 const RoundCallback& on_round = {});

}  // namespace ticket
