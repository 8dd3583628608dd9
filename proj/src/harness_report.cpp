#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "imprg/harness.hpp"

namespace imprg::harness {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

void plot_loss_density(const fs::path& dir, const imp::ImpTrace& mean,
                       const std::vector<imp::ImpTrace>& runs) {
  std::string text = "density,mean_loss,stderr_loss,n_runs\n";
  for (std::size_t i = 0; i < mean.records.size(); ++i) {
    double se = 0.0;
    int n = static_cast<int>(runs.size());
    if (n > 1) {
      double ss = 0.0;
      for (const auto& run : runs) {
        const double d = run.records[i].final_loss - mean.records[i].final_loss;
        ss += d * d;
      }
      se = std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
    }
    text += fmt_double(mean.records[i].density);
    text += ',';
    text += fmt_double(mean.records[i].final_loss);
    text += ',';
    text += fmt_double(se);
    text += ',';
    text += std::to_string(std::max(n, 1));
    text += '\n';
  }
  write_text(dir / "plot_loss_density.csv", text);
}

void plot_power_law(const fs::path& dir, const imp::ImpTrace& trace,
                    const rg_analysis::PowerLawFit& fit) {
  std::string text =
      "density,delta_d,loss,log_delta_d,log_loss,fit_log_loss\n";
  for (const auto& rec : trace.records) {
    if (rec.density > fit.region.d_l && rec.density < fit.region.d_c &&
        rec.final_loss > 0.0) {
      const double delta = fit.region.d_c - rec.density;
      const double lx = std::log(delta);
      text += fmt_double(rec.density);
      text += ',';
      text += fmt_double(delta);
      text += ',';
      text += fmt_double(rec.final_loss);
      text += ',';
      text += fmt_double(lx);
      text += ',';
      text += fmt_double(std::log(rec.final_loss));
      text += ',';
      text += fmt_double(fit.intercept + fit.slope * lx);
      text += '\n';
    }
  }
  write_text(dir / "plot_power_law.csv", text);
}

void plot_sigma(const fs::path& dir, const rg_analysis::SigmaReport& report) {
  std::string text = "layer,lambda,stderr,sigma,class\n";
  for (const auto& row : report.rows) {
    text += std::to_string(row.layer);
    text += ',';
    text += fmt_double(row.lambda);
    text += ',';
    text += fmt_double(row.stderr_);
    text += ',';
    text += fmt_double(row.sigma);
    text += ',';
    text += rg_analysis::direction_name(row.direction);
    text += '\n';
  }
  write_text(dir / "plot_sigma.csv", text);
}

void plot_tickets(const fs::path& dir, const imp::ImpTrace& trace,
                  const std::vector<imp::Ticket>& tickets) {
  std::string text = "iter,density,final_loss,winning\n";
  std::vector<bool> winning(trace.records.size(), false);
  for (const auto& ticket : tickets) {
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
      if (trace.records[i].iter == ticket.iter) winning[i] = true;
    }
  }
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& rec = trace.records[i];
    text += std::to_string(rec.iter);
    text += ',';
    text += fmt_double(rec.density);
    text += ',';
    text += fmt_double(rec.final_loss);
    text += ',';
    text += winning[i] ? '1' : '0';
    text += '\n';
  }
  write_text(dir / "plot_tickets.csv", text);
}

void plot_transfer(const fs::path& dir, const transfer::TransferTable& table) {
  std::string text = "density,transferred_loss,native_loss,winning\n";
  for (const auto& row : table.rows) {
    text += fmt_double(row.density);
    text += ',';
    text += fmt_double(row.transferred_loss);
    text += ',';
    text += fmt_double(row.native_loss);
    text += ',';
    text += row.winning ? '1' : '0';
    text += '\n';
  }
  write_text(dir / "plot_transfer.csv", text);
}

}  // namespace

RunArtifact emit_report(const fs::path& dir) {
  RunArtifact artifact;
  artifact.dir = dir;
  const fs::path plots = dir / "plots";
  fs::create_directories(plots);

  if (fs::exists(dir / "transfer.csv")) {
    const transfer::TransferTable table = read_transfer_csv(dir / "transfer.csv");
    plot_transfer(plots, table);
    artifact.trace_csv = dir / "transfer.csv";
    return artifact;
  }

  const LoadedRun loaded = load_run(dir);
  artifact.trace_csv =
      fs::exists(dir / "trace_mean.csv") ? dir / "trace_mean.csv" : dir / "trace.csv";
  artifact.config_echo_json = dir / "config_echo.json";
  artifact.summary_json = dir / "summary.json";

  // Per-run traces, when present, feed the stderr column.
  std::vector<imp::ImpTrace> runs;
  for (int r = 0;; ++r) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "run_%03d", r);
    const fs::path run_trace = dir / buf / "trace.csv";
    if (!fs::exists(run_trace)) break;
    imp::ImpTrace trace = read_trace_csv(run_trace);
    if (fs::exists(dir / buf / "config_echo.json")) {
      read_config_echo(dir / buf / "config_echo.json", trace);
    }
    if (trace.status == imp::RunStatus::kCompleted &&
        trace.records.size() == loaded.trace.records.size()) {
      runs.push_back(std::move(trace));
    }
  }

  const int n_runs = std::max<int>(loaded.config.runs, 1);
  const int n_completed = runs.empty() ? 1 : static_cast<int>(runs.size());
  const Summary summary =
      analyze_trace(loaded.trace, loaded.config.analysis, n_runs, n_completed);
  write_summary_json(artifact.summary_json, summary, loaded.config);

  plot_loss_density(plots, loaded.trace, runs);
  if (summary.power_law.has_value()) {
    plot_power_law(plots, loaded.trace, *summary.power_law);
  }
  if (summary.sigma.has_value()) {
    plot_sigma(plots, *summary.sigma);
  }
  if (summary.tickets.has_value()) {
    plot_tickets(plots, loaded.trace, *summary.tickets);
  }
  return artifact;
}

}  // namespace imprg::harness
