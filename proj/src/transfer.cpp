#include "imprg/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace imprg::transfer {

namespace {

void copy_layer_bits(const nn_core::Mask& src, int layer, nn_core::Mask& dst,
                     std::int64_t dst_off) {
  const std::int64_t off = src.layer_offset(layer);
  const std::int64_t cnt = src.layer_weight_count(layer);
  std::copy(src.bits.begin() + off, src.bits.begin() + off + cnt,
            dst.bits.begin() + dst_off);
}

}  // namespace

nn_core::Mask duplicate_output_mask(const nn_core::Mask& source) {
  source.validate();
  const int last = static_cast<int>(source.shapes.size()) - 1;
  const int rows = source.shapes[last].rows;
  const int cols = source.shapes[last].cols;

  nn_core::Mask out;
  out.shapes = source.shapes;
  out.shapes[last].rows = 2 * rows;
  out.bits.resize(source.bits.size() + static_cast<std::int64_t>(rows) * cols);

  std::int64_t off = 0;
  for (int l = 0; l < last; ++l) {
    copy_layer_bits(source, l, out, off);
    off += source.layer_weight_count(l);
  }
  const std::int64_t src_off = source.layer_offset(last);
  for (int r = 0; r < rows; ++r) {
    for (int copy = 0; copy < 2; ++copy) {
      std::copy(source.bits.begin() + src_off + static_cast<std::int64_t>(r) * cols,
                source.bits.begin() + src_off + static_cast<std::int64_t>(r + 1) * cols,
                out.bits.begin() + off);
      off += cols;
    }
  }
  out.validate();
  return out;
}

nn_core::Mask truncate_output_mask(const nn_core::Mask& source,
                                   const std::vector<int>& drop_rows) {
  source.validate();
  const int last = static_cast<int>(source.shapes.size()) - 1;
  const int rows = source.shapes[last].rows;
  const int cols = source.shapes[last].cols;
  std::vector<bool> drop(rows, false);
  for (int r : drop_rows) {
    if (r < 0 || r >= rows) {
      throw std::invalid_argument("drop row out of range");
    }
    if (drop[r]) {
      throw std::invalid_argument("duplicate drop row");
    }
    drop[r] = true;
  }
  const int kept = rows - static_cast<int>(drop_rows.size());
  if (kept < 1) {
    throw std::invalid_argument("truncation must keep at least one output row");
  }

  nn_core::Mask out;
  out.shapes = source.shapes;
  out.shapes[last].rows = kept;
  out.bits.resize(source.layer_offset(last) +
                  static_cast<std::int64_t>(kept) * cols);

  std::int64_t off = 0;
  for (int l = 0; l < last; ++l) {
    copy_layer_bits(source, l, out, off);
    off += source.layer_weight_count(l);
  }
  const std::int64_t src_off = source.layer_offset(last);
  for (int r = 0; r < rows; ++r) {
    if (drop[r]) continue;
    std::copy(source.bits.begin() + src_off + static_cast<std::int64_t>(r) * cols,
              source.bits.begin() + src_off + static_cast<std::int64_t>(r + 1) * cols,
              out.bits.begin() + off);
    off += cols;
  }
  out.validate();
  return out;
}

MaskTransferPlan make_transfer_plan(const nn_core::NetworkSpec& source,
                                    const nn_core::NetworkSpec& target) {
  source.validate();
  target.validate();
  if (source.input_dim != target.input_dim ||
      source.hidden_dims != target.hidden_dims) {
    throw std::invalid_argument(
        "transfer needs identical input and hidden architecture");
  }
  MaskTransferPlan plan;
  plan.source = source;
  plan.target = target;
  plan.rules.assign(source.layer_count(), LayerRule::kIdentity);
  if (source.output_dim == target.output_dim) {
    return plan;
  }
  if (target.output_dim == 2 * source.output_dim) {
    plan.rules.back() = LayerRule::kDuplicateRows;
    return plan;
  }
  if (source.output_dim == 2 * target.output_dim) {
    plan.rules.back() = LayerRule::kTruncateRows;
    plan.drop_rows.resize(target.output_dim);
    for (int i = 0; i < target.output_dim; ++i) {
      plan.drop_rows[i] = 2 * i + 1;
    }
    return plan;
  }
  throw std::invalid_argument(
      "output dims must match or differ by exactly a factor of two");
}

nn_core::Mask apply_plan(const MaskTransferPlan& plan,
                         const nn_core::Mask& source) {
  if (!source.matches(plan.source)) {
    throw std::invalid_argument("mask does not match the plan's source spec");
  }
  switch (plan.rules.back()) {
    case LayerRule::kIdentity:
      return source;
    case LayerRule::kDuplicateRows:
      return duplicate_output_mask(source);
    case LayerRule::kTruncateRows:
      return truncate_output_mask(source, plan.drop_rows);
  }
  return source;
}

TransferTable transfer_experiment(const imp::ImpTrace& source_trace,
                                  const hnn_tasks::TaskBinding& target_task,
                                  const nn_core::ParamState& target_init,
                                  const MaskTransferPlan& plan,
                                  const nn_core::TrainConfig& train_config,
                                  const imp::ImpTrace& native_trace,
                                  double tolerance_factor, int max_rows) {
  if (source_trace.records.empty()) {
    throw std::invalid_argument("transfer needs a non-empty source trace");
  }
  if (native_trace.records.empty()) {
    throw std::invalid_argument("transfer needs a non-empty native trace");
  }
  if (!(tolerance_factor >= 1.0)) {
    throw std::invalid_argument("tolerance factor must be >= 1");
  }
  if (!target_init.spec.operator==(plan.target)) {
    throw std::invalid_argument("target init does not match the plan");
  }
  for (const auto& rec : source_trace.records) {
    if (rec.mask.bits.empty()) {
      throw std::invalid_argument("source trace lacks per-iteration masks");
    }
  }
  const double native_full_loss = native_trace.records.front().final_loss;

  TransferTable table;
  table.source_task = source_trace.task;
  table.target_task = hnn_tasks::task_name(target_task.task);
  const int n_rows =
      max_rows < 0 ? static_cast<int>(source_trace.records.size())
                   : std::min<int>(max_rows, source_trace.records.size());
  for (int i = 0; i < n_rows; ++i) {
    const auto& rec = source_trace.records[i];
    const nn_core::Mask tmask = apply_plan(plan, rec.mask);
    TransferRow row;
    row.source_iter = rec.iter;
    row.density = imp::density(tmask, imp::PruneScope::full());

    const nn_core::ParamState start = imp::rewind(target_init, tmask);
    const nn_core::TrainResult result =
        nn_core::train(start, tmask, target_task, train_config);
    if (result.status != nn_core::TrainStatus::kOk) {
      row.failed = true;
      row.transferred_loss = std::nan("");
    } else {
      row.transferred_loss = result.final_loss;
      row.winning = result.final_loss <= tolerance_factor * native_full_loss;
    }

    double best_gap = std::numeric_limits<double>::infinity();
    for (const auto& nat : native_trace.records) {
      const double gap = std::fabs(nat.density - row.density);
      if (gap < best_gap) {
        best_gap = gap;
        row.native_loss = nat.final_loss;
      }
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace imprg::transfer
