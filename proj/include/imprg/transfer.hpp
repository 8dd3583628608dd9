#pragma once

#include <string>
#include <vector>

#include "imprg/imp.hpp"
#include "imprg/nn_core.hpp"

namespace imprg::transfer {

enum class LayerRule { kIdentity, kDuplicateRows, kTruncateRows };

// How each layer's mask moves from the source architecture to the target.
// Only the output layer may reshape; hidden and input layers must match.
struct MaskTransferPlan {
  nn_core::NetworkSpec source;
  nn_core::NetworkSpec target;
  std::vector<LayerRule> rules;
  std::vector<int> drop_rows;  // for kTruncateRows
};

// Each source output row repeated in place: rows (r0, r1) become
// (r0, r0, r1, r1), so positions map to positions and momenta to momenta.
// Other layers are copied unchanged.
nn_core::Mask duplicate_output_mask(const nn_core::Mask& source);

// Drops the listed output rows (default 1 and 3), keeping the rest in order.
nn_core::Mask truncate_output_mask(const nn_core::Mask& source,
                                   const std::vector<int>& drop_rows = {1, 3});

// Validates the pair and picks the output rule from the row ratio.
MaskTransferPlan make_transfer_plan(const nn_core::NetworkSpec& source,
                                    const nn_core::NetworkSpec& target);

nn_core::Mask apply_plan(const MaskTransferPlan& plan,
                         const nn_core::Mask& source);

struct TransferRow {
  int source_iter = 0;
  double density = 0.0;        // of the transferred mask, target denominator
  double transferred_loss = 0.0;
  double native_loss = 0.0;    // nearest-density native record
  bool winning = false;
  bool failed = false;         // training diverged for this row
};

struct TransferTable {
  std::string source_task;
  std::string target_task;
  std::vector<TransferRow> rows;
};

// Re-trains the target network from its own init under each transferred
// source mask and pairs every row with the nearest-density native record.
// winning compares against the native full-model loss scaled by
// tolerance_factor. Rows whose training diverges are marked failed and kept.
// max_rows < 0 takes every source record.
TransferTable transfer_experiment(const imp::ImpTrace& source_trace,
                                  const hnn_tasks::TaskBinding& target_task,
                                  const nn_core::ParamState& target_init,
                                  const MaskTransferPlan& plan,
                                  const nn_core::TrainConfig& train_config,
                                  const imp::ImpTrace& native_trace,
                                  double tolerance_factor = 1.0,
                                  int max_rows = -1);

}  // namespace imprg::transfer
