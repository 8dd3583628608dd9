#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "imprg/harness.hpp"

namespace imprg::harness {

int worker_count(int runs) {
  int workers = 0;
  if (const char* env = std::getenv("IMP_RG_WORKERS")) {
    try {
      std::size_t pos = 0;
      workers = std::stoi(env, &pos);
      if (pos != std::string(env).size()) workers = 0;
    } catch (const std::exception&) {
      workers = 0;
    }
    if (workers < 1) {
      throw std::invalid_argument(
          "IMP_RG_WORKERS must be a positive integer");
    }
  } else {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
  }
  return std::min(workers, std::max(runs, 1));
}

imp::ImpTrace average_runs(const std::vector<imp::ImpTrace>& traces) {
  if (traces.empty()) {
    throw std::invalid_argument("average needs at least one trace");
  }
  const imp::ImpTrace& first = traces.front();
  for (const auto& trace : traces) {
    if (trace.records.size() != first.records.size() ||
        trace.x != first.x || !(trace.scope == first.scope)) {
      throw std::invalid_argument("averaged traces must share their config");
    }
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
      if (trace.records[i].iter != first.records[i].iter ||
          trace.records[i].layer_m_frac.size() !=
              first.records[i].layer_m_frac.size()) {
        throw std::invalid_argument("averaged traces must share their shape");
      }
    }
  }

  imp::ImpTrace mean = first;
  mean.init_fingerprint.clear();
  const double inv_n = 1.0 / static_cast<double>(traces.size());
  for (std::size_t i = 0; i < mean.records.size(); ++i) {
    imp::ImpRecord& rec = mean.records[i];
    rec.mask = nn_core::Mask{};
    double loss = 0.0;
    std::vector<double> m_frac(rec.layer_m_frac.size(), 0.0);
    for (const auto& trace : traces) {
      loss += trace.records[i].final_loss;
      for (std::size_t l = 0; l < m_frac.size(); ++l) {
        m_frac[l] += trace.records[i].layer_m_frac[l];
      }
    }
    rec.final_loss = loss * inv_n;
    for (std::size_t l = 0; l < m_frac.size(); ++l) {
      rec.layer_m_frac[l] = m_frac[l] * inv_n;
    }
  }
  return mean;
}

Summary analyze_trace(const imp::ImpTrace& trace,
                      const AnalysisToggles& toggles, int n_runs,
                      int n_runs_completed) {
  Summary summary;
  summary.n_runs = n_runs;
  summary.n_runs_completed = n_runs_completed;
  if (n_runs_completed < n_runs) {
    summary.notes = "incomplete average: " +
                    std::to_string(n_runs - n_runs_completed) +
                    " run(s) failed and were excluded";
  }
  if (trace.records.empty()) {
    summary.notes = "no completed runs";
    return summary;
  }

  if (toggles.power_law) {
    std::optional<rg_analysis::CriticalRegion> region;
    if (toggles.region_d_l.has_value() && toggles.region_d_c.has_value()) {
      region = rg_analysis::CriticalRegion{*toggles.region_d_l,
                                           *toggles.region_d_c};
    } else if (trace.records.size() >= 10) {
      rg_analysis::RegionParams params;
      params.tolerance_factor = toggles.region_tolerance;
      region = rg_analysis::detect_critical_region(trace, params);
    }
    if (region.has_value()) {
      int in_region = 0;
      for (const auto& rec : trace.records) {
        if (rec.density > region->d_l && rec.density < region->d_c &&
            rec.final_loss > 0.0) {
          ++in_region;
        }
      }
      if (in_region >= 3) {
        summary.power_law = rg_analysis::fit_power_law(trace, *region);
      }
    }
  }
  if (toggles.sigma && trace.records.size() >= 2) {
    summary.sigma = rg_analysis::sigma_report(trace);
  }
  if (toggles.tickets) {
    summary.tickets = imp::identify_winning_tickets(
        trace, trace.records.front().final_loss, toggles.ticket_tolerance);
  }
  return summary;
}

namespace {

std::string run_dir_name(int run_index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "run_%03d", run_index);
  return buf;
}

}  // namespace

RunArtifact run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  fs::create_directories(config.out_dir);
  write_experiment_echo(config.out_dir / "config_echo.json", config);

  std::vector<imp::ImpTrace> traces(config.runs);
  std::vector<std::string> errors(config.runs);
  std::atomic<int> next{0};
  const int workers = worker_count(config.runs);

  const auto body = [&]() {
    while (true) {
      const int r = next.fetch_add(1);
      if (r >= config.runs) return;
      try {
        imp::ImpConfig imp_config = config.imp;
        imp_config.seed = config.base_seed + static_cast<std::uint64_t>(r);
        const nn_core::ParamState init =
            nn_core::init_network(config.net, imp_config.seed);
        traces[r] = imp::run_imp(init, config.task, imp_config);
      } catch (const std::exception& e) {
        errors[r] = e.what();
      }
    }
  };

  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }

  for (int r = 0; r < config.runs; ++r) {
    if (!errors[r].empty()) {
      throw std::runtime_error("run " + std::to_string(r) +
                               " failed: " + errors[r]);
    }
  }

  std::vector<imp::ImpTrace> completed;
  for (int r = 0; r < config.runs; ++r) {
    const fs::path run_dir = config.out_dir / run_dir_name(r);
    fs::create_directories(run_dir);
    ExperimentConfig echo = config;
    echo.base_seed = traces[r].seed;
    write_trace_csv(run_dir / "trace.csv", traces[r]);
    if (!traces[r].records.empty()) {
      write_masks_json(run_dir / "masks.json", traces[r]);
    }
    write_config_echo(run_dir / "config_echo.json", echo, traces[r]);
    if (traces[r].status == imp::RunStatus::kCompleted) {
      completed.push_back(traces[r]);
    }
  }

  RunArtifact artifact;
  artifact.dir = config.out_dir;
  artifact.config_echo_json = config.out_dir / "config_echo.json";
  artifact.summary_json = config.out_dir / "summary.json";

  Summary summary;
  if (!completed.empty()) {
    const imp::ImpTrace mean = average_runs(completed);
    artifact.trace_csv = config.out_dir / "trace_mean.csv";
    write_trace_csv(artifact.trace_csv, mean);
    summary = analyze_trace(mean, config.analysis, config.runs,
                            static_cast<int>(completed.size()));
  } else {
    summary.n_runs = config.runs;
    summary.n_runs_completed = 0;
    summary.notes = "no completed runs";
  }
  write_summary_json(artifact.summary_json, summary, config);
  return artifact;
}

}  // namespace imprg::harness
