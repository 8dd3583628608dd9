#include "imprg/imp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "imprg/rg_analysis.hpp"

namespace imprg::imp {

std::string PruneScope::to_string() const {
  if (full_model) return "full";
  return "layer:" + std::to_string(layer);
}

PruneScope PruneScope::parse(const std::string& s) {
  if (s == "full") return full();
  if (s.rfind("layer:", 0) == 0) {
    const int layer = std::stoi(s.substr(6));
    if (layer < 0) throw std::invalid_argument("negative layer in scope");
    return single_layer(layer);
  }
  throw std::invalid_argument("unknown prune scope: " + s);
}

void ImpConfig::validate() const {
  if (!(x > 0.0 && x < 1.0)) {
    throw std::invalid_argument("prune fraction x must be in (0, 1)");
  }
  if (iterations < 0) {
    throw std::invalid_argument("iterations must be >= 0");
  }
  if (!scope.full_model && scope.layer < 0) {
    throw std::invalid_argument("layer scope needs a layer index");
  }
}

const char* run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::kCompleted:
      return "completed";
    case RunStatus::kDiverged:
      return "diverged";
    case RunStatus::kLayerCollapse:
      return "layer_collapse";
  }
  return "completed";
}

RunStatus parse_run_status(const std::string& s) {
  if (s == "completed") return RunStatus::kCompleted;
  if (s == "diverged") return RunStatus::kDiverged;
  if (s == "layer_collapse") return RunStatus::kLayerCollapse;
  throw std::invalid_argument("unknown run status: " + s);
}

double density(const nn_core::Mask& mask, const PruneScope& scope) {
  mask.validate();
  if (scope.full_model) {
    return static_cast<double>(mask.surviving()) /
           static_cast<double>(mask.weight_count());
  }
  if (scope.layer >= static_cast<int>(mask.shapes.size())) {
    throw std::invalid_argument("scope layer out of range");
  }
  return static_cast<double>(mask.surviving_in_layer(scope.layer)) /
         static_cast<double>(mask.layer_weight_count(scope.layer));
}

int iterations_to_density(double x, double target) {
  if (!(x > 0.0 && x < 1.0)) {
    throw std::invalid_argument("prune fraction x must be in (0, 1)");
  }
  if (!(target > 0.0 && target < 1.0)) {
    throw std::invalid_argument("target density must be in (0, 1)");
  }
  return static_cast<int>(std::ceil(std::log(target) / std::log(1.0 - x)));
}

nn_core::Mask prune_step(const nn_core::ParamState& trained,
                         const nn_core::Mask& mask, double x,
                         const PruneScope& scope) {
  if (!(x > 0.0 && x < 1.0)) {
    throw std::invalid_argument("prune fraction x must be in (0, 1)");
  }
  if (!mask.matches(trained.spec)) {
    throw std::invalid_argument("mask does not match network spec");
  }
  if (!scope.full_model &&
      (scope.layer < 0 || scope.layer >= static_cast<int>(mask.shapes.size()))) {
    throw std::invalid_argument("scope layer out of range");
  }

  const std::int64_t lo =
      scope.full_model ? 0 : mask.layer_offset(scope.layer);
  const std::int64_t hi = scope.full_model
                              ? mask.weight_count()
                              : lo + mask.layer_weight_count(scope.layer);

  std::vector<std::int64_t> survivors;
  survivors.reserve(hi - lo);
  for (std::int64_t i = lo; i < hi; ++i) {
    if (mask.bits[i]) survivors.push_back(i);
  }
  const std::int64_t s = static_cast<std::int64_t>(survivors.size());
  std::int64_t n_prune = static_cast<std::int64_t>(
      std::floor(x * static_cast<double>(s)));
  if (n_prune == 0 && s > 1) n_prune = 1;
  if (s <= 1 || n_prune >= s) {
    const int layer = scope.full_model
                          ? (s > 0
                                 ? trained.layout.locate(survivors.front()).layer
                                 : 0)
                          : scope.layer;
    throw PruneError(layer, "prune step would empty its scope");
  }

  std::sort(survivors.begin(), survivors.end(),
            [&](std::int64_t a, std::int64_t b) {
              const double ma = std::fabs(trained.values[a]);
              const double mb = std::fabs(trained.values[b]);
              if (ma != mb) return ma < mb;
              return a < b;
            });

  nn_core::Mask next = mask;
  for (std::int64_t i = 0; i < n_prune; ++i) {
    next.bits[survivors[i]] = 0;
  }

  for (int l = 0; l < static_cast<int>(next.shapes.size()); ++l) {
    if (next.surviving_in_layer(l) == 0) {
      throw PruneError(l, "prune step emptied layer " + std::to_string(l));
    }
  }
  return next;
}

nn_core::ParamState rewind(const nn_core::ParamState& init,
                           const nn_core::Mask& mask) {
  if (!mask.matches(init.spec)) {
    throw std::invalid_argument("mask does not match network spec");
  }
  nn_core::ParamState out = init;
  for (std::int64_t i = 0; i < init.layout.n_weights; ++i) {
    if (!mask.bits[i]) out.values[i] = 0.0;
  }
  return out;
}

namespace {

ImpRecord make_record(int iter, const nn_core::ParamState& trained,
                      const nn_core::Mask& mask, double loss) {
  ImpRecord rec;
  rec.iter = iter;
  rec.density = density(mask, PruneScope::full());
  rec.final_loss = loss;
  const int n_layers = static_cast<int>(mask.shapes.size());
  rec.layer_m_frac.resize(n_layers);
  rec.layer_surviving.resize(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    rec.layer_m_frac[l] = rg_analysis::layer_magnitude_fraction(trained, mask, l);
    rec.layer_surviving[l] = mask.surviving_in_layer(l);
  }
  rec.mask = mask;
  return rec;
}

}  // namespace

ImpTrace run_imp(const nn_core::ParamState& init,
                 const hnn_tasks::TaskBinding& task, const ImpConfig& config) {
  config.validate();
  init.spec.validate();

  ImpTrace trace;
  trace.task = hnn_tasks::task_name(task.task);
  trace.x = config.x;
  trace.iterations = config.iterations;
  trace.scope = config.scope;
  trace.seed = config.seed;
  trace.init_fingerprint = fingerprint(init.values);

  nn_core::Mask mask = nn_core::Mask::ones(init.spec);
  nn_core::ParamState trained = init;

  for (int iter = 0; iter <= config.iterations; ++iter) {
    if (iter > 0) {
      try {
        mask = prune_step(trained, mask, config.x, config.scope);
      } catch (const PruneError& e) {
        trace.status = RunStatus::kLayerCollapse;
        trace.fail_iter = iter;
        trace.fail_detail = e.layer;
        return trace;
      }
    }
    const nn_core::ParamState start = rewind(init, mask);
    const nn_core::TrainResult result = nn_core::train(start, mask, task,
                                                       config.train);
    if (result.status == nn_core::TrainStatus::kDiverged) {
      trace.status = RunStatus::kDiverged;
      trace.fail_iter = iter;
      trace.fail_detail = result.diverged_epoch;
      return trace;
    }
    trained = result.params;
    trace.records.push_back(make_record(iter, trained, mask, result.final_loss));
  }
  return trace;
}

std::vector<Ticket> identify_winning_tickets(const ImpTrace& trace,
                                             double full_model_loss,
                                             double tolerance_factor) {
  if (trace.records.empty()) {
    throw std::invalid_argument("winning tickets need a non-empty trace");
  }
  if (!(tolerance_factor >= 1.0)) {
    throw std::invalid_argument("tolerance factor must be >= 1");
  }
  std::vector<Ticket> tickets;
  for (const auto& rec : trace.records) {
    if (rec.final_loss <= tolerance_factor * full_model_loss) {
      tickets.push_back({rec.iter, rec.density});
    }
  }
  return tickets;
}

std::string fingerprint(const std::vector<double>& values) {
  // FNV-1a over the raw bytes.
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace imprg::imp
