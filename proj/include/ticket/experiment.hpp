#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "ticket/checkpoint.hpp"
#include "ticket/pruning.hpp"
#include "ticket/similarity.hpp"

namespace ticket {

struct DataConfig {
  std::string kind = "two-gaussians";  // two-gaussians | checkerboard | bars | idx
  int size = 16;
  int count = 4096;
  std::string path;  // for kind == "idx"
  bool pool = true;  // idx only: pad to 2*model size and 2x2-average-pool
};

struct ExperimentConfig {
  UNetConfig model;
  int timesteps = 100;
  double beta_start = 1e-3;  // DDPM's 1e-4 .. 0.02 time-rescaled to T=100
  double beta_end = 0.2;
  PruneSchedule prune;
  TrainOptions train;
  DataConfig data;
  int quality_samples = 128;
  int quality_reference = 512;
  uint64_t seed = 1;
  std::string out_dir = "run";
  CkaMode cka_mode = CkaMode::Root;

  static ExperimentConfig preset(const std::string& name);  // synthetic | mnist
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  NoiseSchedule make_schedule() const {
    return NoiseSchedule::linear(timesteps, beta_start, beta_end);
  }
  Dataset make_dataset() const;
  TicketOptions ticket_options() const;
};

// Writes a binary PGM (P5) grid of [-1,1] images, `cols` per row.
void write_pgm_grid(const Tensor& images, int cols,
                    const std::filesystem::path& path);

// CSV column layout of rounds.csv:
//   round,phase,global_sparsity,loss,mmd2,frechet,flops_saving,
//   module_sparsity_00..module_sparsity_<J-1>
// `global_sparsity` and the module columns describe the mask the row's model
// was trained with, so (global_sparsity, mmd2) pairs plot directly.
struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path rounds_csv() const { return dir / "rounds.csv"; }
  std::filesystem::path quality_csv() const { return dir / "quality_vs_sparsity.csv"; }
  std::filesystem::path config_json() const { return dir / "config.json"; }
  std::filesystem::path dense_ckpt() const { return dir / "dense.ckpt"; }
  std::filesystem::path ticket_ckpt() const { return dir / "ticket.ckpt"; }
  std::filesystem::path retrained_ckpt() const { return dir / "ticket_retrained.ckpt"; }
  std::filesystem::path round_ckpt(int r) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "round_%03d.ckpt", r);
    return dir / buf;
  }
};

struct TicketRunOutcome {
  TicketResult ticket;
  double final_mmd2 = 0.0;     // retrained final ticket
  double final_frechet = 0.0;
  double final_loss = 0.0;
  double baseline_mmd2 = 0.0;  // dense model from round 1
  double baseline_frechet = 0.0;
  RunPaths paths;
};

// `ticket` subcommand: the full iterative loop plus a final retrain of the
// winning ticket, with rounds.csv / quality_vs_sparsity.csv / checkpoints
// written under cfg.out_dir.
TicketRunOutcome run_ticket(const ExperimentConfig& cfg, std::ostream& log);

// `train` subcommand: dense training only; writes train_log.csv + dense.ckpt.
void run_train(const ExperimentConfig& cfg, int iterations, std::ostream& log);

// `report` subcommand: summarizes an existing run directory; byte-idempotent.
std::string run_report(const std::filesystem::path& run_dir);

// Rebuilds model state from a checkpoint for sample/cka/flops subcommands.
struct LoadedModel {
  ExperimentConfig cfg;
  ParameterSet params;
  MaskSet mask;
};
LoadedModel load_model(const std::filesystem::path& ckpt);

void write_profile_csv(const SimilarityProfile& prof,
                       const std::filesystem::path& path);

// Fixed-format float for CSV cells ("%.10g"); NaN prints as "nan".
std::string csv_num(double v);

}  // namespace ticket
