// Command-line front end: train, imp, experiment, analyze, transfer, report.

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "imprg/harness.hpp"
#include "imprg/hnn_tasks.hpp"
#include "imprg/imp.hpp"
#include "imprg/kernels.hpp"
#include "imprg/nn_core.hpp"
#include "imprg/rg_analysis.hpp"
#include "imprg/transfer.hpp"

namespace fs = std::filesystem;
using namespace imprg;

namespace {

struct ModelFlags {
  std::string task = "nl";
  std::vector<int> hidden = {50, 50};
  std::string activation = "tanh";
  double t_max = 0.0;  // 0 keeps the task default
  bool ic_constraint = false;
  int epochs = 5000;
  double lr = 8e-3;
  int k_points = 200;
  std::string backend = "auto";
  std::uint64_t seed = 1;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--task", f.task, "nl or hh")->capture_default_str();
  cmd->add_option("--hidden", f.hidden, "hidden layer widths")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--activation", f.activation, "tanh or sin")
      ->capture_default_str();
  cmd->add_option("--t-max", f.t_max, "domain end (0 = task default)");
  cmd->add_flag("--ic-constraint", f.ic_constraint,
                "hard-wire the initial conditions into the outputs");
  cmd->add_option("--epochs", f.epochs)->capture_default_str();
  cmd->add_option("--lr", f.lr)->capture_default_str();
  cmd->add_option("--k-points", f.k_points, "collocation grid size")
      ->capture_default_str();
  cmd->add_option("--backend", f.backend, "auto, scalar or avx2")
      ->capture_default_str();
  cmd->add_option("--seed", f.seed)->capture_default_str();
}

hnn_tasks::TaskBinding binding_from(const ModelFlags& f) {
  hnn_tasks::TaskBinding b = hnn_tasks::parse_task(f.task) ==
                                     hnn_tasks::TaskId::kNlOscillator
                                 ? hnn_tasks::make_nl_task()
                                 : hnn_tasks::make_hh_task();
  if (f.t_max > 0.0) b.t_max = f.t_max;
  b.ic_constraint = f.ic_constraint;
  return b;
}

nn_core::NetworkSpec spec_from(const ModelFlags& f,
                               const hnn_tasks::TaskBinding& b) {
  nn_core::NetworkSpec spec;
  spec.hidden_dims = f.hidden;
  spec.output_dim = hnn_tasks::task_arity(b.task);
  spec.activation = nn_core::parse_activation(f.activation);
  spec.validate();
  return spec;
}

nn_core::TrainConfig train_from(const ModelFlags& f) {
  nn_core::TrainConfig cfg;
  cfg.epochs = f.epochs;
  cfg.lr = f.lr;
  cfg.k_points = f.k_points;
  cfg.backend = kernels::parse_backend(f.backend.c_str());
  return cfg;
}

int cmd_train(const ModelFlags& f) {
  const auto binding = binding_from(f);
  const auto spec = spec_from(f, binding);
  auto params = nn_core::init_network(spec, f.seed);
  nn_core::Mask mask = nn_core::Mask::ones(spec);
  const auto result = nn_core::train(params, mask, binding, train_from(f));
  const auto grid =
      hnn_tasks::make_time_grid(binding.t0, binding.t_max, f.k_points);
  std::printf("task=%s params=%lld final_loss=%.12g status=%s\n",
              hnn_tasks::task_name(binding.task),
              static_cast<long long>(spec.param_count()),
              result.final_loss, result.status == nn_core::TrainStatus::kOk
                                     ? "ok"
                                     : "diverged");
  if (result.status == nn_core::TrainStatus::kOk) {
    std::printf("energy_drift=%.12g\n",
                hnn_tasks::energy_drift(result.params, mask, binding, grid));
    return 0;
  }
  std::printf("diverged_epoch=%d\n", result.diverged_epoch);
  return 1;
}

// Assembled by `imp` so the run writes the same echo as `experiment`.
harness::ExperimentConfig assemble_config(const ModelFlags& f, double x,
                                          int iterations,
                                          const std::string& scope,
                                          const fs::path& out) {
  harness::ExperimentConfig cfg;
  cfg.task = binding_from(f);
  cfg.net = spec_from(f, cfg.task);
  cfg.imp.x = x;
  cfg.imp.iterations = iterations;
  cfg.imp.scope = imp::PruneScope::parse(scope);
  cfg.imp.train = train_from(f);
  cfg.imp.seed = f.seed;
  cfg.runs = 1;
  cfg.base_seed = f.seed;
  cfg.out_dir = out;
  cfg.validate();
  return cfg;
}

int cmd_imp(const ModelFlags& f, double x, int iterations,
            const std::string& scope, const fs::path& out) {
  if (iterations < 0) iterations = imp::iterations_to_density(x, 0.1);
  const auto cfg = assemble_config(f, x, iterations, scope, out);
  auto init = nn_core::init_network(cfg.net, f.seed);
  const auto trace = imp::run_imp(init, cfg.task, cfg.imp);
  fs::create_directories(out);
  harness::write_trace_csv(out / "trace.csv", trace);
  harness::write_masks_json(out / "masks.json", trace);
  harness::write_config_echo(out / "config_echo.json", cfg, trace);
  std::printf("wrote %s (%zu records, status=%s)\n",
              (out / "trace.csv").c_str(), trace.records.size(),
              imp::run_status_name(trace.status));
  return trace.status == imp::RunStatus::kCompleted ? 0 : 1;
}

int cmd_experiment(const fs::path& config_path,
                   std::optional<std::uint64_t> seed) {
  const auto cfg = harness::load_experiment_config(config_path, seed);
  const auto artifact = harness::run_experiment(cfg);
  std::printf("experiment dir: %s\n", artifact.dir.c_str());
  std::printf("trace: %s\n", artifact.trace_csv.c_str());
  std::printf("summary: %s\n", artifact.summary_json.c_str());
  return 0;
}

int count_completed_runs(const fs::path& dir, const imp::ImpTrace& mean) {
  int n = 0;
  for (int r = 0;; ++r) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "run_%03d", r);
    if (!fs::exists(dir / buf / "trace.csv")) break;
    imp::ImpTrace t = harness::read_trace_csv(dir / buf / "trace.csv");
    if (fs::exists(dir / buf / "config_echo.json")) {
      harness::read_config_echo(dir / buf / "config_echo.json", t);
    }
    if (t.status == imp::RunStatus::kCompleted &&
        t.records.size() == mean.records.size()) {
      ++n;
    }
  }
  return n;
}

int cmd_analyze(const fs::path& dir, std::optional<double> ticket_tol,
                std::optional<double> region_tol, std::optional<double> d_l,
                std::optional<double> d_c) {
  harness::LoadedRun loaded = harness::load_run(dir);
  auto& toggles = loaded.config.analysis;
  if (ticket_tol) toggles.ticket_tolerance = *ticket_tol;
  if (region_tol) toggles.region_tolerance = *region_tol;
  if (d_l && d_c) {
    toggles.region_d_l = d_l;
    toggles.region_d_c = d_c;
  } else if (d_l || d_c) {
    throw std::runtime_error("--d-l and --d-c must be given together");
  }
  const int completed = count_completed_runs(dir, loaded.trace);
  const auto summary = harness::analyze_trace(
      loaded.trace, toggles, loaded.config.runs,
      completed > 0 ? completed : 1);
  harness::write_summary_json(dir / "summary.json", summary, loaded.config);

  if (summary.power_law) {
    const auto& pl = *summary.power_law;
    std::printf("power_law: d_l=%.6g d_c=%.6g gamma=%.6g slope=%.6g r2=%.6g "
                "(%d points)\n",
                pl.region.d_l, pl.region.d_c, pl.gamma, pl.slope, pl.r2,
                pl.n_points);
  } else {
    std::printf("power_law: none\n");
  }
  if (summary.sigma) {
    for (const auto& row : summary.sigma->rows) {
      std::printf("sigma layer=%d lambda=%.6g stderr=%.3g sigma=%.6g %s\n",
                  row.layer, row.lambda, row.stderr_, row.sigma,
                  rg_analysis::direction_name(row.direction));
    }
  }
  if (summary.tickets) {
    std::printf("winning tickets: %zu", summary.tickets->size());
    double dmin = 1.0;
    for (const auto& t : *summary.tickets) dmin = std::min(dmin, t.density);
    if (!summary.tickets->empty()) std::printf(" (min density %.6g)", dmin);
    std::printf("\n");
  }
  if (!summary.notes.empty()) std::printf("note: %s\n", summary.notes.c_str());
  return 0;
}

int cmd_transfer(const fs::path& source_dir, const fs::path& native_dir,
                 const fs::path& out, std::optional<int> epochs,
                 std::optional<double> lr, std::optional<int> k_points,
                 double tol, int rows) {
  harness::LoadedRun source = harness::load_run(source_dir);
  harness::LoadedRun native = harness::load_run(native_dir);
  if (!source.has_masks) {
    throw std::runtime_error("source run has no masks.json; rerun `imp` or "
                             "`experiment` with masks enabled");
  }
  const auto plan =
      transfer::make_transfer_plan(source.config.net, native.config.net);
  auto target_init =
      nn_core::init_network(native.config.net, native.config.base_seed);
  nn_core::TrainConfig train_cfg = native.config.imp.train;
  if (epochs) train_cfg.epochs = *epochs;
  if (lr) train_cfg.lr = *lr;
  if (k_points) train_cfg.k_points = *k_points;
  const auto table = transfer::transfer_experiment(
      source.trace, native.config.task, target_init, plan, train_cfg,
      native.trace, tol, rows);
  fs::create_directories(out);
  harness::write_transfer_csv(out / "transfer.csv", table);
  int winning = 0;
  for (const auto& row : table.rows) winning += row.winning ? 1 : 0;
  std::printf("wrote %s (%zu rows, %d winning)\n",
              (out / "transfer.csv").c_str(), table.rows.size(), winning);
  return 0;
}

int cmd_report(const fs::path& dir) {
  const auto artifact = harness::emit_report(dir);
  std::printf("report under %s\n", (artifact.dir / "plots").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative magnitude pruning on Hamiltonian networks"};
  app.require_subcommand(1);

  ModelFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train one full model");
  add_model_flags(train_cmd, train_flags);

  ModelFlags imp_flags;
  double imp_x = 0.01;
  int imp_iters = -1;
  std::string imp_scope = "full";
  fs::path imp_out;
  auto* imp_cmd = app.add_subcommand("imp", "run one IMP trajectory");
  add_model_flags(imp_cmd, imp_flags);
  imp_cmd->add_option("--x", imp_x, "prune fraction per iteration")
      ->capture_default_str();
  imp_cmd->add_option("--iters", imp_iters,
                      "pruning iterations (default: down to 10% density)");
  imp_cmd->add_option("--scope", imp_scope, "full or layer:N")
      ->capture_default_str();
  imp_cmd->add_option("--out", imp_out, "output directory")->required();

  fs::path exp_config;
  std::optional<std::uint64_t> exp_seed;
  auto* exp_cmd = app.add_subcommand("experiment", "config-driven batch");
  exp_cmd->add_option("--config", exp_config, "experiment config file")
      ->required();
  exp_cmd->add_option("--seed", exp_seed, "override the config seed");

  fs::path ana_dir;
  std::optional<double> ana_ticket_tol, ana_region_tol, ana_dl, ana_dc;
  auto* ana_cmd =
      app.add_subcommand("analyze", "fits and sigmas from a stored trace");
  ana_cmd->add_option("--dir", ana_dir, "run or experiment directory")
      ->required();
  ana_cmd->add_option("--ticket-tolerance", ana_ticket_tol);
  ana_cmd->add_option("--region-tolerance", ana_region_tol);
  ana_cmd->add_option("--d-l", ana_dl, "manual fit window start");
  ana_cmd->add_option("--d-c", ana_dc, "manual critical density");

  fs::path tr_source, tr_native, tr_out;
  std::optional<int> tr_epochs, tr_k;
  std::optional<double> tr_lr;
  double tr_tol = 1.0;
  int tr_rows = -1;
  auto* tr_cmd =
      app.add_subcommand("transfer", "re-train under transferred masks");
  tr_cmd->add_option("--source", tr_source, "source run directory")
      ->required();
  tr_cmd->add_option("--native", tr_native, "native target run directory")
      ->required();
  tr_cmd->add_option("--out", tr_out, "output directory")->required();
  tr_cmd->add_option("--epochs", tr_epochs, "override re-train epochs");
  tr_cmd->add_option("--lr", tr_lr, "override re-train learning rate");
  tr_cmd->add_option("--k-points", tr_k, "override re-train grid size");
  tr_cmd->add_option("--tolerance", tr_tol, "winning-ticket tolerance")
      ->capture_default_str();
  tr_cmd->add_option("--rows", tr_rows, "max source records (-1 = all)")
      ->capture_default_str();

  fs::path rep_dir;
  auto* rep_cmd = app.add_subcommand("report", "emit plot-ready CSVs");
  rep_cmd->add_option("--dir", rep_dir, "artifact directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(train_flags);
    if (*imp_cmd)
      return cmd_imp(imp_flags, imp_x, imp_iters, imp_scope, imp_out);
    if (*exp_cmd) return cmd_experiment(exp_config, exp_seed);
    if (*ana_cmd)
      return cmd_analyze(ana_dir, ana_ticket_tol, ana_region_tol, ana_dl,
                         ana_dc);
    if (*tr_cmd)
      return cmd_transfer(tr_source, tr_native, tr_out, tr_epochs, tr_lr,
                          tr_k, tr_tol, tr_rows);
    if (*rep_cmd) return cmd_report(rep_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
