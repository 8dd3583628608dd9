#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "imprg/hnn_tasks.hpp"
#include "imprg/imp.hpp"
#include "imprg/nn_core.hpp"
#include "imprg/rg_analysis.hpp"
#include "imprg/transfer.hpp"

namespace imprg::harness {

inline constexpr int kFormatVersion = 1;

// Flat `dotted.key = value` files with '#' comments. Every key must be
// consumed by a getter; leftovers are reported as unknown.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::filesystem::path& path);
  static ConfigFile parse_string(const std::string& text);

  std::string get_string(const std::string& key, const std::string& fallback);
  std::string require_string(const std::string& key);
  std::int64_t get_int(const std::string& key, std::int64_t fallback);
  double get_real(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::optional<double> get_optional_real(const std::string& key);
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& fallback);
  std::vector<double> get_real_list(const std::string& key,
                                    const std::vector<double>& fallback);

  // Throws listing every key no getter asked for.
  void reject_unknown_keys() const;

 private:
  std::map<std::string, std::string> entries_;
  std::map<std::string, bool> consumed_;
  const std::string* lookup(const std::string& key);
};

struct AnalysisToggles {
  bool power_law = true;
  bool sigma = true;
  bool tickets = true;
  double ticket_tolerance = 1.0;
  double region_tolerance = 2.0;
  // Manual region override; both must be set to take effect.
  std::optional<double> region_d_l;
  std::optional<double> region_d_c;
};

struct ExperimentConfig {
  hnn_tasks::TaskBinding task;
  nn_core::NetworkSpec net;
  imp::ImpConfig imp;
  int runs = 1;
  std::uint64_t base_seed = 1;
  std::filesystem::path out_dir;
  AnalysisToggles analysis;

  void validate() const;
};

// Parses a config file into an ExperimentConfig; `seed_override` replaces the
// file's seed when present (the CLI --seed flag).
ExperimentConfig load_experiment_config(
    const std::filesystem::path& path,
    std::optional<std::uint64_t> seed_override = std::nullopt);

// --- artifact io ---------------------------------------------------------

extern const char* const kTraceCsvHeader;
extern const char* const kTransferCsvHeader;

// Fixed 9-column schema; only 3-layer traces are representable.
void write_trace_csv(const std::filesystem::path& path,
                     const imp::ImpTrace& trace);
// Rejects any header deviation, including unknown columns. Masks and config
// echo live in sibling files; the returned trace carries records only.
imp::ImpTrace read_trace_csv(const std::filesystem::path& path);

void write_masks_json(const std::filesystem::path& path,
                      const imp::ImpTrace& trace);
// Merges per-iteration masks into a trace read from CSV.
void read_masks_json(const std::filesystem::path& path, imp::ImpTrace& trace);

void write_config_echo(const std::filesystem::path& path,
                       const ExperimentConfig& config,
                       const imp::ImpTrace& trace);
// Experiment-level echo: the config alone, no run status.
void write_experiment_echo(const std::filesystem::path& path,
                           const ExperimentConfig& config);
// Restores the trace metadata (x, scope, seed, status...) and the run's
// experiment config.
ExperimentConfig read_config_echo(const std::filesystem::path& path,
                                  imp::ImpTrace& trace);

// Reads a run or experiment directory: trace_mean.csv when present, else
// trace.csv, plus config echo and per-iteration masks when stored.
struct LoadedRun {
  ExperimentConfig config;
  imp::ImpTrace trace;
  bool has_masks = false;
};
LoadedRun load_run(const std::filesystem::path& dir);

void write_transfer_csv(const std::filesystem::path& path,
                        const transfer::TransferTable& table);
transfer::TransferTable read_transfer_csv(const std::filesystem::path& path);

struct Summary {
  int format_version = kFormatVersion;
  std::optional<rg_analysis::PowerLawFit> power_law;
  std::optional<rg_analysis::SigmaReport> sigma;
  std::optional<std::vector<imp::Ticket>> tickets;
  int n_runs = 0;
  int n_runs_completed = 0;
  std::string notes;  // e.g. incomplete averages
};

void write_summary_json(const std::filesystem::path& path,
                        const Summary& summary,
                        const ExperimentConfig& config);
Summary read_summary_json(const std::filesystem::path& path);

// Round-trip helpers shared by the io layer and the CLI.
std::string summary_to_json(const Summary& summary,
                            const ExperimentConfig& config);

// --- experiment driver ---------------------------------------------------

struct RunArtifact {
  std::filesystem::path dir;
  std::filesystem::path trace_csv;
  std::filesystem::path config_echo_json;
  std::filesystem::path summary_json;
  int format_version = kFormatVersion;
};

// Worker count: IMP_RG_WORKERS when set, else hardware concurrency, at least
// one and never more than the run count.
int worker_count(int runs);

// Averages losses and magnitude fractions pointwise over completed traces
// (they must agree on shape); densities and survivor counts come from the
// first. Masks are not averaged.
imp::ImpTrace average_runs(const std::vector<imp::ImpTrace>& traces);

// Runs R seeds (base_seed + r), writes run_XXX/ artifacts, the averaged
// trace, and a summary holding each enabled analysis of the averaged trace.
RunArtifact run_experiment(const ExperimentConfig& config);

// Computes the summary analyses for one trace with the config's toggles.
Summary analyze_trace(const imp::ImpTrace& trace,
                      const AnalysisToggles& toggles, int n_runs,
                      int n_runs_completed);

// Re-reads the artifacts in dir and writes plot-ready CSVs (plots/*.csv) plus
// a refreshed summary.json. Works on experiment dirs, single-run dirs and
// transfer dirs.
RunArtifact emit_report(const std::filesystem::path& dir);

}  // namespace imprg::harness
