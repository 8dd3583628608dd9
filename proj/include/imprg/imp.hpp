#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "imprg/hnn_tasks.hpp"
#include "imprg/nn_core.hpp"

namespace imprg::imp {

// What the prune step ranks: every surviving weight, or one layer's.
struct PruneScope {
  bool full_model = true;
  int layer = -1;

  static PruneScope full() { return {true, -1}; }
  static PruneScope single_layer(int layer) { return {false, layer}; }
  std::string to_string() const;
  static PruneScope parse(const std::string& s);
  bool operator==(const PruneScope&) const = default;
};

struct ImpConfig {
  double x = 0.01;  // per-round prune fraction, in (0, 1)
  int iterations = 0;  // prune/rewind/train rounds after the full-model round
  PruneScope scope = PruneScope::full();
  nn_core::TrainConfig train;
  std::uint64_t seed = 0;  // echoed into artifacts

  void validate() const;
};

struct PruneError : std::runtime_error {
  int layer;
  explicit PruneError(int layer_index, const std::string& what)
      : std::runtime_error(what), layer(layer_index) {}
};

enum class RunStatus { kCompleted, kDiverged, kLayerCollapse };
const char* run_status_name(RunStatus s);
RunStatus parse_run_status(const std::string& s);

struct ImpRecord {
  int iter = 0;
  double density = 1.0;
  double final_loss = 0.0;
  std::vector<double> layer_m_frac;
  std::vector<std::int64_t> layer_surviving;
  nn_core::Mask mask;
};

struct ImpTrace {
  std::string task;
  double x = 0.0;
  int iterations = 0;
  PruneScope scope;
  std::uint64_t seed = 0;
  std::string init_fingerprint;
  std::vector<ImpRecord> records;
  RunStatus status = RunStatus::kCompleted;
  int fail_iter = -1;      // iteration at which training failed or prune collapsed
  int fail_detail = -1;    // epoch index (diverged) or layer index (collapse)
};

// Fraction of in-scope weights kept by the mask.
double density(const nn_core::Mask& mask, const PruneScope& scope);

// Closed-form round count to reach `target` density: ceil(ln target / ln(1-x)).
int iterations_to_density(double x, double target);

// Clears the bits of the floor(x*s) smallest-magnitude surviving weights in
// scope (at least one when s > 1). Ties prune the lower flat index first.
// Throws PruneError when a layer would lose its last surviving weight.
nn_core::Mask prune_step(const nn_core::ParamState& trained,
                         const nn_core::Mask& mask, double x,
                         const PruneScope& scope);

// Element-wise product of the initial parameters with the mask; biases pass
// through unchanged.
nn_core::ParamState rewind(const nn_core::ParamState& init,
                           const nn_core::Mask& mask);

// Iterative magnitude pruning: record 0 is the full model trained from init;
// each later record prunes the previous round's trained weights, rewinds the
// survivors to their initial values and retrains. On divergence or layer
// collapse the trace keeps the completed records and carries the failure.
ImpTrace run_imp(const nn_core::ParamState& init,
                 const hnn_tasks::TaskBinding& task, const ImpConfig& config);

struct Ticket {
  int iter = 0;
  double density = 1.0;
};

// Records whose loss is within tolerance_factor of the full-model loss.
std::vector<Ticket> identify_winning_tickets(const ImpTrace& trace,
                                             double full_model_loss,
                                             double tolerance_factor = 1.0);

std::string fingerprint(const std::vector<double>& values);

}  // namespace imprg::imp
