#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ticket/experiment.hpp"

namespace {

// exit codes (also in --help)
constexpr int kOk = 0;
constexpr int kUsage = 2;     // bad flags, missing/invalid config
constexpr int kBadFile = 3;   // corrupt checkpoint / IDX / CSV input
constexpr int kTraining = 4;  // non-finite loss or gradient
constexpr int kIo = 5;        // filesystem failures

struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::string> preset;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> rounds;
  std::optional<double> p, q, delta, rewind_frac;
  std::optional<std::string> cka_mode;
};

void add_common(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "JSON config file");
  cmd->add_option("--preset", ov.preset, "named preset: synthetic | mnist")
      ->check(CLI::IsMember({"synthetic", "mnist"}));
  cmd->add_option("--seed", ov.seed, "master seed");
  cmd->add_option("--out", ov.out, "output directory");
  cmd->add_option("--rounds", ov.rounds, "maximum pruning rounds");
  cmd->add_option("--p", ov.p, "base pruning ratio, percent");
  cmd->add_option("--q", ov.q, "per-module ratio increment, percent");
  cmd->add_option("--delta", ov.delta, "target global sparsity in (0,1)");
  cmd->add_option("--rewind-frac", ov.rewind_frac, "rewind point as fraction of round iterations");
  cmd->add_option("--cka-mode", ov.cka_mode, "CKA normalization: root | paper")
      ->check(CLI::IsMember({"root", "paper"}));
}

ticket::ExperimentConfig build_config(const Overrides& ov) {
  ticket::ExperimentConfig cfg;
  if (ov.config_path) {
    cfg = ticket::ExperimentConfig::load(*ov.config_path);
  } else {
    cfg = ticket::ExperimentConfig::preset(ov.preset.value_or("synthetic"));
  }
  if (ov.preset && ov.config_path)
    throw std::invalid_argument("pass either --config or --preset, not both");
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.out) cfg.out_dir = *ov.out;
  if (ov.rounds) cfg.prune.max_rounds = *ov.rounds;
  if (ov.p) cfg.prune.p = *ov.p;
  if (ov.q) cfg.prune.q = *ov.q;
  if (ov.delta) cfg.prune.delta = *ov.delta;
  if (ov.rewind_frac) cfg.prune.rewind_fraction = *ov.rewind_frac;
  if (ov.cka_mode)
    cfg.cka_mode = *ov.cka_mode == "root" ? ticket::CkaMode::Root
                                          : ticket::CkaMode::PaperLiteral;
  return cfg;
}

int classify(const std::exception& e) {
  const std::string w = e.what();
  if (w.find("training failure") != std::string::npos) return kTraining;
  if (w.find("checkpoint:") != std::string::npos ||
      w.find("idx:") != std::string::npos ||
      w.find("report:") != std::string::npos)
    return kBadFile;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return kUsage;
  return kIo;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ddpm-ticket: finds sparse retrainable subnetworks (winning tickets) in a "
      "small DDPM by graded iterative magnitude pruning with weight rewinding, "
      "and analyzes ticket similarity with HSIC/CKA."};
  app.require_subcommand(1);
  app.footer(
      "exit codes: 0 ok, 2 usage or config error, 3 corrupt input file "
      "(checkpoint/IDX), 4 training failure (non-finite loss/gradient), "
      "5 I/O error");

  Overrides ov;

  auto* c_train = app.add_subcommand("train", "train the dense model only");
  add_common(c_train, ov);
  int train_iters = 0;
  c_train->add_option("--iters", train_iters,
                      "training iterations (default: prune.iters_per_round)");

  auto* c_ticket = app.add_subcommand(
      "ticket", "full iterative magnitude pruning run (train/prune/rewind)");
  add_common(c_ticket, ov);

  auto* c_sample = app.add_subcommand("sample", "generate images from a checkpoint");
  std::string ckpt_path, ckpt_a, ckpt_b, run_dir;
  int sample_count = 64, sample_cols = 8;
  bool trajectory = false;
  std::optional<uint64_t> sample_seed;
  c_sample->add_option("--checkpoint", ckpt_path, "checkpoint to sample from")
      ->required();
  c_sample->add_option("--count", sample_count, "number of images");
  c_sample->add_option("--cols", sample_cols, "grid columns");
  c_sample->add_option("--seed", sample_seed, "sampling seed (default: config seed)");
  c_sample->add_option("--out", run_dir, "output directory (default: checkpoint's)");
  c_sample->add_flag("--trajectory", trajectory,
                     "also write a denoising-trajectory strip");

  auto* c_cka = app.add_subcommand(
      "cka", "per-module CKA similarity profile between two checkpoints");
  c_cka->add_option("--checkpoint-a", ckpt_a, "first ticket checkpoint")->required();
  c_cka->add_option("--checkpoint-b", ckpt_b, "second ticket checkpoint")->required();
  c_cka->add_option("--out", run_dir, "output directory (default: cwd)");

  auto* c_flops = app.add_subcommand("flops", "FLOPs ledger for a config or checkpoint");
  add_common(c_flops, ov);
  c_flops->add_option("--checkpoint", ckpt_path,
                      "count with this checkpoint's mask densities");

  auto* c_report = app.add_subcommand("report", "summary table for a finished run");
  c_report->add_option("--run", run_dir, "run directory (contains rounds.csv)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*c_train) {
      auto cfg = build_config(ov);
      run_train(cfg, train_iters > 0 ? train_iters : cfg.prune.iters_per_round,
                std::cout);
    } else if (*c_ticket) {
      auto cfg = build_config(ov);
      const auto out = ticket::run_ticket(cfg, std::cout);
      if (out.ticket.aborted) {
        std::cerr << "training failure: " << out.ticket.abort_reason << "\n";
        return kTraining;
      }
    } else if (*c_sample) {
      const auto m = ticket::load_model(ckpt_path);
      ticket::SampleOptions so;
      so.count = sample_count;
      so.seed = sample_seed.value_or(m.cfg.seed);
      const auto ns = m.cfg.make_schedule();
      if (trajectory) {
        const int T = ns.timesteps;
        so.trajectory_at = {T, 3 * T / 4, T / 2, T / 4, T / 8, 0};
      }
      const auto res = ticket::sample(m.cfg.model, m.params, m.mask, ns, so);
      const std::filesystem::path dir =
          run_dir.empty() ? std::filesystem::path(ckpt_path).parent_path()
                          : std::filesystem::path(run_dir);
      std::filesystem::create_directories(dir.empty() ? "." : dir);
      const auto grid = dir / "samples.pgm";
      ticket::write_pgm_grid(res.images, sample_cols, grid);
      std::cout << "wrote " << grid.string() << "\n";
      if (trajectory) {
        // one row per image, one column per recorded step
        const auto& tr = res.trajectory;
        const int64_t K = static_cast<int64_t>(tr.size());
        ticket::Tensor strip({so.count * K, tr[0].dim(1), tr[0].dim(2), tr[0].dim(3)});
        const int64_t per = tr[0].numel() / so.count;
        for (int64_t i = 0; i < so.count; ++i)
          for (int64_t k = 0; k < K; ++k)
            std::copy_n(&tr[static_cast<size_t>(k)]
                             .data[static_cast<size_t>(i * per)],
                        per,
                        &strip.data[static_cast<size_t>((i * K + k) * per)]);
        for (auto& v : strip.data) v = std::clamp(v, -1.0f, 1.0f);
        const auto traj = dir / "trajectory.pgm";
        ticket::write_pgm_grid(strip, static_cast<int>(K), traj);
        std::cout << "wrote " << traj.string() << "\n";
      }
    } else if (*c_cka) {
      const auto a = ticket::load_model(ckpt_a);
      const auto b = ticket::load_model(ckpt_b);
      const auto prof = ticket::profile(a.params, a.mask, b.params, b.mask);
      const std::filesystem::path dir = run_dir.empty() ? "." : run_dir;
      std::filesystem::create_directories(dir);
      const auto out = dir / "profile.csv";
      ticket::write_profile_csv(prof, out);
      std::cout << "wrote " << out.string() << "\n";
      for (const auto& r : prof.rows)
        std::cout << "module " << r.module << ": cka_root "
                  << (r.root.defined ? ticket::csv_num(r.root.value) : "undefined")
                  << "\n";
    } else if (*c_flops) {
      ticket::FlopsReport rep;
      if (!ckpt_path.empty()) {
        const auto m = ticket::load_model(ckpt_path);
        rep = ticket::count_flops(m.cfg.model, m.mask);
      } else {
        rep = ticket::count_flops(build_config(ov).model);
      }
      std::cout << rep.pretty();
    } else if (*c_report) {
      const std::string text = ticket::run_report(run_dir);
      std::ofstream f(std::filesystem::path(run_dir) / "report.txt",
                      std::ios::trunc);
      f << text;
      std::cout << text;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify(e);
  }
  return kOk;
}
