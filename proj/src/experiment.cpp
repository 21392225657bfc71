#include "ticket/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace ticket {

namespace {

void reject_unknown(const nlohmann::json& j, const char* where,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok)
      throw std::invalid_argument(std::string("config: unknown key '") + key +
                                  "' in " + where);
  }
}

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "synthetic") {
    // desk default: two-gaussians 16x16, T=100, 2000 iters/round, batch 64,
    // p=20, q=1, 10 rounds
    c.prune.max_rounds = 10;
    c.out_dir = "run-synthetic";
  } else if (name == "mnist") {
    c.data.kind = "idx";
    c.data.path = "train-images-idx3-ubyte";
    c.data.count = 8192;
    c.prune.max_rounds = 10;
    c.out_dir = "run-mnist";
  } else {
    throw std::invalid_argument("unknown preset '" + name +
                                "' (expected synthetic or mnist)");
  }
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {
      {"model",
       {{"channels", model.channels},
        {"image_size", model.image_size},
        {"base_channels", model.base_channels},
        {"levels", model.levels},
        {"time_embed_dim", model.time_embed_dim}}},
      {"diffusion",
       {{"timesteps", timesteps},
        {"beta_start", beta_start},
        {"beta_end", beta_end}}},
      {"prune",
       {{"p", prune.p},
        {"q", prune.q},
        {"delta", prune.delta},
        {"rewind_fraction", prune.rewind_fraction},
        {"iters_per_round", prune.iters_per_round},
        {"max_rounds", prune.max_rounds},
        {"snapshot_mode",
         prune.snapshot_mode == PruneSchedule::SnapshotMode::Round1 ? "round1"
                                                                    : "per_round"}}},
      {"train",
       {{"batch_size", train.batch_size},
        {"lr", train.adam.lr},
        {"beta1", train.adam.beta1},
        {"beta2", train.adam.beta2},
        {"eps", train.adam.eps}}},
      {"data",
       {{"kind", data.kind},
        {"size", data.size},
        {"count", data.count},
        {"path", data.path},
        {"pool", data.pool}}},
      {"metrics",
       {{"quality_samples", quality_samples},
        {"quality_reference", quality_reference}}},
      {"seed", seed},
      {"out_dir", out_dir},
      {"cka_mode", cka_mode == CkaMode::Root ? "root" : "paper"},
  };
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  reject_unknown(j, "top level",
                 {"model", "diffusion", "prune", "train", "data", "metrics",
                  "seed", "out_dir", "cka_mode"});
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, "model",
                   {"channels", "image_size", "base_channels", "levels",
                    "time_embed_dim"});
    get_if(m, "channels", c.model.channels);
    get_if(m, "image_size", c.model.image_size);
    get_if(m, "base_channels", c.model.base_channels);
    get_if(m, "levels", c.model.levels);
    get_if(m, "time_embed_dim", c.model.time_embed_dim);
  }
  if (j.contains("diffusion")) {
    const auto& d = j.at("diffusion");
    reject_unknown(d, "diffusion", {"timesteps", "beta_start", "beta_end"});
    get_if(d, "timesteps", c.timesteps);
    get_if(d, "beta_start", c.beta_start);
    get_if(d, "beta_end", c.beta_end);
  }
  if (j.contains("prune")) {
    const auto& p = j.at("prune");
    reject_unknown(p, "prune",
                   {"p", "q", "delta", "rewind_fraction", "iters_per_round",
                    "max_rounds", "snapshot_mode"});
    get_if(p, "p", c.prune.p);
    get_if(p, "q", c.prune.q);
    get_if(p, "delta", c.prune.delta);
    get_if(p, "rewind_fraction", c.prune.rewind_fraction);
    get_if(p, "iters_per_round", c.prune.iters_per_round);
    get_if(p, "max_rounds", c.prune.max_rounds);
    if (p.contains("snapshot_mode")) {
      const std::string m = p.at("snapshot_mode").get<std::string>();
      if (m == "round1")
        c.prune.snapshot_mode = PruneSchedule::SnapshotMode::Round1;
      else if (m == "per_round")
        c.prune.snapshot_mode = PruneSchedule::SnapshotMode::PerRound;
      else
        throw std::invalid_argument("config: snapshot_mode must be round1 or per_round");
    }
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, "train", {"batch_size", "lr", "beta1", "beta2", "eps"});
    get_if(t, "batch_size", c.train.batch_size);
    get_if(t, "lr", c.train.adam.lr);
    get_if(t, "beta1", c.train.adam.beta1);
    get_if(t, "beta2", c.train.adam.beta2);
    get_if(t, "eps", c.train.adam.eps);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, "data", {"kind", "size", "count", "path", "pool"});
    get_if(d, "kind", c.data.kind);
    get_if(d, "size", c.data.size);
    get_if(d, "count", c.data.count);
    get_if(d, "path", c.data.path);
    get_if(d, "pool", c.data.pool);
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    reject_unknown(m, "metrics", {"quality_samples", "quality_reference"});
    get_if(m, "quality_samples", c.quality_samples);
    get_if(m, "quality_reference", c.quality_reference);
  }
  get_if(j, "seed", c.seed);
  get_if(j, "out_dir", c.out_dir);
  if (j.contains("cka_mode")) {
    const std::string m = j.at("cka_mode").get<std::string>();
    if (m == "root")
      c.cka_mode = CkaMode::Root;
    else if (m == "paper")
      c.cka_mode = CkaMode::PaperLiteral;
    else
      throw std::invalid_argument("config: cka_mode must be root or paper");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: parse error in " + path.string() + ": " +
                                e.what());
  }
  return from_json(j);
}

Dataset ExperimentConfig::make_dataset() const {
  if (data.kind == "idx") {
    if (data.path.empty())
      throw std::invalid_argument("config: data.kind 'idx' requires data.path");
    Dataset ds = load_idx_file(data.path);
    if (data.pool) ds = pad_and_pool(ds, 2 * model.image_size);
    if (ds.images.dim(2) != model.image_size || ds.images.dim(3) != model.image_size)
      throw std::invalid_argument(
          "config: dataset size " + std::to_string(ds.images.dim(2)) +
          " does not match model image size " + std::to_string(model.image_size));
    if (data.count > 0 && data.count < ds.count()) {
      Dataset cut;
      cut.source = ds.source;
      cut.images = Tensor({data.count, ds.images.dim(1), ds.images.dim(2),
                           ds.images.dim(3)});
      std::copy_n(ds.images.data.begin(), cut.images.data.size(),
                  cut.images.data.begin());
      return cut;
    }
    return ds;
  }
  if (data.size != model.image_size)
    throw std::invalid_argument("config: data.size must match model.image_size");
  return synthetic(synthetic_kind_from(data.kind), data.size, data.count, seed);
}

TicketOptions ExperimentConfig::ticket_options() const {
  TicketOptions o;
  o.model = model;
  o.schedule = make_schedule();
  o.prune = prune;
  o.train = train;
  o.quality_samples = quality_samples;
  o.quality_reference = quality_reference;
  o.seed = seed;
  return o;
}

void write_pgm_grid(const Tensor& images, int cols,
                    const std::filesystem::path& path) {
  const int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2),
                w = images.dim(3);
  if (c != 1 && c != 3)
    throw std::invalid_argument("image grid: needs 1 or 3 channels");
  if (cols < 1) cols = 1;
  const int64_t gcols = std::min<int64_t>(cols, n);
  const int64_t grows = (n + gcols - 1) / gcols;
  const int64_t W = gcols * w, H = grows * h;

  auto to_u8 = [](float v) {
    const long u = std::lround((static_cast<double>(v) + 1.0) * 127.5);
    return static_cast<uint8_t>(std::clamp(u, 0l, 255l));
  };

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write image " + path.string());
  f << (c == 1 ? "P5" : "P6") << "\n" << W << " " << H << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(W * c));
  for (int64_t gy = 0; gy < grows; ++gy)
    for (int64_t py = 0; py < h; ++py) {
      std::fill(row.begin(), row.end(), 0);
      for (int64_t gx = 0; gx < gcols; ++gx) {
        const int64_t idx = gy * gcols + gx;
        if (idx >= n) continue;
        for (int64_t px = 0; px < w; ++px)
          for (int64_t ch = 0; ch < c; ++ch)
            row[static_cast<size_t>((gx * w + px) * c + ch)] =
                to_u8(images.at4(idx, ch, py, px));
      }
      f.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
    }
}

void write_profile_csv(const SimilarityProfile& prof,
                       const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "module_index,cka_root,cka_paper_literal,bandwidth_a,bandwidth_b\n";
  for (const auto& r : prof.rows) {
    f << r.module << ","
      << (r.root.defined ? csv_num(r.root.value) : "nan") << ","
      << (r.paper_literal.defined ? csv_num(r.paper_literal.value) : "nan") << ","
      << csv_num(r.bandwidth_a) << "," << csv_num(r.bandwidth_b) << "\n";
  }
}

namespace {

std::map<std::string, std::array<uint64_t, 4>> stream_states(uint64_t seed,
                                                             int next_round) {
  const auto r = static_cast<uint64_t>(next_round);
  return {
      {"noise", Rng(seed, "noise", r).state()},
      {"shuffle", Rng(seed, "shuffle", r).state()},
  };
}

Checkpoint make_ckpt(const ExperimentConfig& cfg, std::string label, int round,
                     int64_t step, const ParameterSet& params,
                     const MaskSet& mask, const AdamState* adam) {
  Checkpoint ck;
  ck.config = cfg.to_json();
  ck.label = std::move(label);
  ck.round = round;
  ck.step = step;
  ck.seed = cfg.seed;
  ck.rng_streams = stream_states(cfg.seed, round + 1);
  ck.params = params;
  ck.mask = mask;
  if (adam) {
    ck.adam = *adam;
    ck.has_adam = true;
  } else {
    ck.adam = AdamState::init(params, cfg.train.adam);
  }
  return ck;
}

void write_rounds_csv(const std::filesystem::path& path,
                      const std::vector<RoundReport>& rounds, int module_count,
                      const RoundReport* final_row) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "round,phase,global_sparsity,loss,mmd2,frechet,flops_saving";
  for (int j = 0; j < module_count; ++j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ",module_sparsity_%02d", j);
    f << buf;
  }
  f << "\n";
  auto row = [&](const RoundReport& r, const char* phase) {
    f << r.round << "," << phase << "," << csv_num(r.trained_sparsity) << ","
      << csv_num(r.mean_loss) << "," << csv_num(r.mmd2) << ","
      << csv_num(r.frechet) << "," << csv_num(r.flops_saving);
    for (double s : r.per_module_trained) f << "," << csv_num(s);
    f << "\n";
  };
  for (const auto& r : rounds) row(r, "train");
  if (final_row) row(*final_row, "final");
}

void write_quality_csv(const std::filesystem::path& path,
                       const std::vector<RoundReport>& rounds,
                       const RoundReport* final_row) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "global_sparsity,mmd2,frechet,flops_saving,phase\n";
  for (const auto& r : rounds)
    f << csv_num(r.trained_sparsity) << "," << csv_num(r.mmd2) << ","
      << csv_num(r.frechet) << "," << csv_num(r.flops_saving) << ",train\n";
  if (final_row)
    f << csv_num(final_row->trained_sparsity) << "," << csv_num(final_row->mmd2)
      << "," << csv_num(final_row->frechet) << ","
      << csv_num(final_row->flops_saving) << ",final\n";
}

}  // namespace

TicketRunOutcome run_ticket(const ExperimentConfig& cfg, std::ostream& log) {
  TicketRunOutcome out;
  out.paths.dir = cfg.out_dir;
  std::filesystem::create_directories(out.paths.dir);
  {
    std::ofstream f(out.paths.config_json(), std::ios::trunc);
    f << cfg.to_json().dump(2) << "\n";
  }

  const Dataset data = cfg.make_dataset();
  const TicketOptions opt = cfg.ticket_options();

  log << "ticket run: " << data.source << ", seed " << cfg.seed << ", p="
      << cfg.prune.p << "% q=" << cfg.prune.q << "% delta=" << cfg.prune.delta
      << ", max " << cfg.prune.max_rounds << " rounds x "
      << cfg.prune.iters_per_round << " iters\n";

  auto on_round = [&](const RoundReport& rep, const ParameterSet& trained,
                      const MaskSet& trained_mask, const MaskSet& pruned_mask,
                      const RewindSnapshot& snap) {
    (void)pruned_mask;
    if (rep.round == 1) {
      const MaskSet ones = trained_mask;  // round 1 trains dense
      save_checkpoint(make_ckpt(cfg, "dense", 1, cfg.prune.iters_per_round,
                                trained, ones, nullptr),
                      out.paths.dense_ckpt());
    }
    save_checkpoint(make_ckpt(cfg, "round", rep.round, snap.step, trained,
                              trained_mask, nullptr),
                    out.paths.round_ckpt(rep.round));
    log << "  round " << rep.round << ": trained at sparsity "
        << csv_num(rep.trained_sparsity) << ", loss " << csv_num(rep.mean_loss)
        << ", mmd2 " << csv_num(rep.mmd2) << ", pruned to "
        << csv_num(rep.pruned_sparsity) << "\n";
    log.flush();
  };

  out.ticket = find_winning_ticket(opt, data, on_round);
  const int J = static_cast<int>(out.ticket.mask.entries.size());

  if (out.ticket.aborted) {
    log << "ABORTED: " << out.ticket.abort_reason << "\n";
    if (!out.ticket.last_good.entries.empty())
      save_checkpoint(make_ckpt(cfg, "last_good",
                                static_cast<int>(out.ticket.rounds.size()), 0,
                                out.ticket.last_good, out.ticket.mask, nullptr),
                      out.paths.dir / "last_good.ckpt");
    write_rounds_csv(out.paths.rounds_csv(), out.ticket.rounds, J, nullptr);
    write_quality_csv(out.paths.quality_csv(), out.ticket.rounds, nullptr);
    return out;
  }

  if (!out.ticket.rounds.empty()) {
    out.baseline_mmd2 = out.ticket.rounds.front().mmd2;
    out.baseline_frechet = out.ticket.rounds.front().frechet;
  }

  save_checkpoint(make_ckpt(cfg, "ticket",
                            static_cast<int>(out.ticket.rounds.size()),
                            out.ticket.snapshot.step, out.ticket.ticket_params,
                            out.ticket.mask, nullptr),
                  out.paths.ticket_ckpt());

  // retrain the winning ticket from theta_tau in isolation
  const int retrain_round = static_cast<int>(out.ticket.rounds.size()) + 1;
  ParameterSet params = out.ticket.ticket_params;
  AdamState adam = AdamState::init(params, cfg.train.adam);
  BatchStream batches(data, cfg.train.batch_size,
                      Rng(cfg.seed, "shuffle", static_cast<uint64_t>(retrain_round)));
  Rng noise(cfg.seed, "noise", static_cast<uint64_t>(retrain_round));
  bool ok = true;
  std::string diag;
  out.final_loss =
      train_segment(cfg.model, params, out.ticket.mask, opt.schedule, batches,
                    noise, adam, cfg.prune.iters_per_round, -1, nullptr, &ok, &diag);
  if (!ok) {
    out.ticket.aborted = true;
    out.ticket.abort_reason = "final retrain: " + diag;
    log << "ABORTED: " << out.ticket.abort_reason << "\n";
    write_rounds_csv(out.paths.rounds_csv(), out.ticket.rounds, J, nullptr);
    write_quality_csv(out.paths.quality_csv(), out.ticket.rounds, nullptr);
    return out;
  }

  RoundReport final_row;
  final_row.round = retrain_round;
  final_row.trained_sparsity = out.ticket.final_sparsity;
  for (const auto& me : out.ticket.mask.entries)
    final_row.per_module_trained.push_back(module_sparsity(me));
  final_row.mean_loss = out.final_loss;
  final_row.flops_saving = count_flops(cfg.model, out.ticket.mask).weight_saving();
  if (cfg.quality_samples > 0) {
    Tensor reference({std::min<int64_t>(cfg.quality_reference, data.count()),
                      data.images.dim(1), data.images.dim(2), data.images.dim(3)});
    std::copy_n(data.images.data.begin(), static_cast<size_t>(reference.numel()),
                reference.data.begin());
    SampleOptions so;
    so.count = cfg.quality_samples;
    so.seed = Rng::fnv1a64("quality") ^ cfg.seed ^
              static_cast<uint64_t>(retrain_round);
    const SampleResult sr =
        sample(cfg.model, params, out.ticket.mask, opt.schedule, so);
    final_row.mmd2 = mmd2(sr.images, reference);
    final_row.frechet = frechet_gaussian(sr.images, reference);
    write_pgm_grid(sr.images, 16, out.paths.dir / "ticket_samples.pgm");
  }
  out.final_mmd2 = final_row.mmd2;
  out.final_frechet = final_row.frechet;

  save_checkpoint(make_ckpt(cfg, "ticket_retrained", retrain_round,
                            cfg.prune.iters_per_round, params, out.ticket.mask,
                            &adam),
                  out.paths.retrained_ckpt());
  write_rounds_csv(out.paths.rounds_csv(), out.ticket.rounds, J, &final_row);
  write_quality_csv(out.paths.quality_csv(), out.ticket.rounds, &final_row);

  log << "final ticket: sparsity " << csv_num(out.ticket.final_sparsity)
      << (out.ticket.reached_delta
              ? " (reached delta, overshoot " + csv_num(out.ticket.overshoot) + ")"
              : " (round budget reached)")
      << ", retrained mmd2 " << csv_num(out.final_mmd2) << " vs dense baseline "
      << csv_num(out.baseline_mmd2) << "\n";
  return out;
}

void run_train(const ExperimentConfig& cfg, int iterations, std::ostream& log) {
  RunPaths paths{cfg.out_dir};
  std::filesystem::create_directories(paths.dir);
  {
    std::ofstream f(paths.config_json(), std::ios::trunc);
    f << cfg.to_json().dump(2) << "\n";
  }
  const Dataset data = cfg.make_dataset();
  const NoiseSchedule ns = cfg.make_schedule();
  ParameterSet params = unet_init(cfg.model, cfg.seed);
  MaskSet mask = MaskSet::ones_like(params);
  AdamState adam = AdamState::init(params, cfg.train.adam);
  BatchStream batches(data, cfg.train.batch_size, Rng(cfg.seed, "shuffle", 1));
  Rng noise(cfg.seed, "noise", 1);

  std::ofstream csv(paths.dir / "train_log.csv", std::ios::trunc);
  csv << "iteration,loss\n";
  double mean = 0.0;
  for (int it = 1; it <= iterations; ++it) {
    const Tensor batch = batches.next();
    const LossResult lr = training_loss(cfg.model, params, mask, batch, ns, noise);
    if (!std::isfinite(lr.loss))
      throw std::runtime_error("training failure: non-finite loss at iteration " +
                               std::to_string(it));
    if (!adam_step(params, lr.grads, adam))
      throw std::runtime_error(
          "training failure: non-finite gradient at iteration " +
          std::to_string(it));
    csv << it << "," << csv_num(lr.loss) << "\n";
    mean += lr.loss;
    if (it % 200 == 0) {
      log << "  iter " << it << ": loss(avg-200) " << csv_num(mean / 200) << "\n";
      log.flush();
      mean = 0.0;
    }
  }
  save_checkpoint(make_ckpt(cfg, "dense", 1, iterations, params, mask, &adam),
                  paths.dense_ckpt());
  log << "saved " << paths.dense_ckpt().string() << "\n";
}

LoadedModel load_model(const std::filesystem::path& ckpt) {
  Checkpoint ck = load_checkpoint(ckpt);
  LoadedModel m;
  m.cfg = ExperimentConfig::from_json(ck.config);
  m.params = std::move(ck.params);
  m.mask = std::move(ck.mask);
  return m;
}

std::string run_report(const std::filesystem::path& run_dir) {
  const std::filesystem::path csv = run_dir / "rounds.csv";
  std::ifstream f(csv);
  if (!f) throw std::runtime_error("report: cannot open " + csv.string());
  std::string header;
  std::getline(f, header);

  struct Row {
    int round;
    std::string phase;
    double sparsity, loss, mmd2, frechet, saving;
  };
  std::vector<Row> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Row r;
    std::string tok;
    std::getline(ss, tok, ',');
    r.round = std::stoi(tok);
    std::getline(ss, r.phase, ',');
    auto num = [&] {
      std::getline(ss, tok, ',');
      return std::strtod(tok.c_str(), nullptr);
    };
    r.sparsity = num();
    r.loss = num();
    r.mmd2 = num();
    r.frechet = num();
    r.saving = num();
    rows.push_back(r);
  }
  if (rows.empty()) throw std::runtime_error("report: no rows in " + csv.string());

  std::ostringstream os;
  os << "run summary: " << run_dir.string() << "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %-6s %12s %12s %12s %12s %12s\n", "round",
                "phase", "sparsity", "loss", "mmd2", "frechet", "flops_save");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-6d %-6s %12.6f %12.6f %12.6f %12.6f %12.6f\n",
                  r.round, r.phase.c_str(), r.sparsity, r.loss, r.mmd2, r.frechet,
                  r.saving);
    os << buf;
  }
  const Row& first = rows.front();
  const Row& last = rows.back();
  std::snprintf(buf, sizeof buf,
                "dense baseline mmd2 %.6f; last row (%s) sparsity %.6f mmd2 %.6f "
                "(%.2fx baseline)\n",
                first.mmd2, last.phase.c_str(), last.sparsity, last.mmd2,
                first.mmd2 > 0 ? last.mmd2 / first.mmd2 : 0.0);
  os << buf;
  return os.str();
}

}  // namespace ticket
