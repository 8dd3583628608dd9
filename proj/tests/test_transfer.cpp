#include <random>
#include <vector>

#include "doctest.h"
#include "imprg/hnn_tasks.hpp"
#include "imprg/imp.hpp"
#include "imprg/nn_core.hpp"
#include "imprg/transfer.hpp"

using namespace imprg;
using namespace imprg::transfer;
using nn_core::LayerShape;
using nn_core::Mask;
using nn_core::NetworkSpec;

namespace {

NetworkSpec spec_with_outputs(int out) {
  NetworkSpec spec;
  spec.hidden_dims = {6, 6};
  spec.output_dim = out;
  return spec;
}

Mask random_mask(const NetworkSpec& spec, std::mt19937_64& rng) {
  Mask mask = Mask::ones(spec);
  std::bernoulli_distribution keep(0.5);
  for (auto& b : mask.bits) b = keep(rng) ? 1 : 0;
  return mask;
}

}  // namespace

TEST_CASE("duplicate interleaves each output row in place") {
  // 2 x 3 output layer with distinct rows.
  Mask source = Mask::ones({{1, 2}, {2, 3}});
  // Row 0 = (1,0,1), row 1 = (0,1,0).
  const std::int64_t off = source.layer_offset(1);
  source.bits[off + 0] = 1;
  source.bits[off + 1] = 0;
  source.bits[off + 2] = 1;
  source.bits[off + 3] = 0;
  source.bits[off + 4] = 1;
  source.bits[off + 5] = 0;

  const Mask doubled = duplicate_output_mask(source);
  REQUIRE(doubled.shapes.back().rows == 4);
  CHECK(doubled.shapes.back().cols == 3);
  const std::int64_t doff = doubled.layer_offset(1);
  // Rows come out as (r0, r0, r1, r1).
  const std::vector<std::uint8_t> expect = {1, 0, 1, 1, 0, 1,
                                            0, 1, 0, 0, 1, 0};
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(doubled.bits[doff + i] == expect[i]);
  }
  // Earlier layers are untouched.
  CHECK(doubled.shapes.front() == source.shapes.front());
  for (std::int64_t i = 0; i < source.layer_weight_count(0); ++i) {
    CHECK(doubled.bits[i] == source.bits[i]);
  }
}

TEST_CASE("truncate drops the duplicated rows by default") {
  Mask source = Mask::ones({{1, 2}, {4, 2}});
  const std::int64_t off = source.layer_offset(1);
  // Rows: (1,1), (0,0), (1,0), (0,1)
  const std::vector<std::uint8_t> rows = {1, 1, 0, 0, 1, 0, 0, 1};
  for (std::size_t i = 0; i < rows.size(); ++i) source.bits[off + i] = rows[i];

  const Mask halved = truncate_output_mask(source);
  REQUIRE(halved.shapes.back().rows == 2);
  const std::int64_t hoff = halved.layer_offset(1);
  CHECK(halved.bits[hoff + 0] == 1);  // row 0 kept
  CHECK(halved.bits[hoff + 1] == 1);
  CHECK(halved.bits[hoff + 2] == 1);  // row 2 kept
  CHECK(halved.bits[hoff + 3] == 0);

  CHECK_THROWS(truncate_output_mask(source, {0, 1, 2, 3}));  // nothing left
  CHECK_THROWS(truncate_output_mask(source, {1, 1}));
  CHECK_THROWS(truncate_output_mask(source, {7}));
}

TEST_CASE("truncate after duplicate is the identity on random masks") {
  std::mt19937_64 rng(67);
  for (int trial = 0; trial < 100; ++trial) {
    Mask source = Mask::ones({{50, 1}, {50, 50}, {2, 50}});
    std::bernoulli_distribution keep(0.5);
    for (auto& b : source.bits) b = keep(rng) ? 1 : 0;
    const Mask round_trip = truncate_output_mask(duplicate_output_mask(source));
    CHECK(round_trip.shapes == source.shapes);
    CHECK(round_trip.bits == source.bits);
  }
}

TEST_CASE("plans are picked from the output row ratio") {
  const auto nl = spec_with_outputs(2);
  const auto hh = spec_with_outputs(4);

  const auto up = make_transfer_plan(nl, hh);
  CHECK(up.rules.back() == LayerRule::kDuplicateRows);
  const auto down = make_transfer_plan(hh, nl);
  CHECK(down.rules.back() == LayerRule::kTruncateRows);
  CHECK(down.drop_rows == std::vector<int>{1, 3});
  const auto same = make_transfer_plan(nl, nl);
  CHECK(same.rules.back() == LayerRule::kIdentity);
  for (std::size_t l = 0; l + 1 < same.rules.size(); ++l) {
    CHECK(same.rules[l] == LayerRule::kIdentity);
  }

  auto wider = nl;
  wider.hidden_dims = {6, 7};
  CHECK_THROWS(make_transfer_plan(nl, wider));  // hidden mismatch
  auto triple = nl;
  triple.output_dim = 6;
  CHECK_THROWS(make_transfer_plan(nl, triple));  // unsupported ratio 3
}

TEST_CASE("apply_plan reshapes masks according to the plan") {
  std::mt19937_64 rng(71);
  const auto hh = spec_with_outputs(4);
  const auto nl = spec_with_outputs(2);
  const auto plan = make_transfer_plan(hh, nl);
  const Mask source = random_mask(hh, rng);
  const Mask mapped = apply_plan(plan, source);
  CHECK(mapped.matches(nl));
  CHECK(mapped == truncate_output_mask(source));

  const Mask wrong_shape = random_mask(nl, rng);
  CHECK_THROWS(apply_plan(plan, wrong_shape));
}

TEST_CASE("transfer experiment pairs rows and flags winners") {
  auto nl = hnn_tasks::make_nl_task();
  nl.ic_constraint = true;
  auto hh = hnn_tasks::make_hh_task();
  hh.ic_constraint = true;

  NetworkSpec nl_spec;
  nl_spec.hidden_dims = {10, 10};
  nl_spec.output_dim = 2;
  NetworkSpec hh_spec = nl_spec;
  hh_spec.output_dim = 4;

  nn_core::TrainConfig tc;
  tc.epochs = 50;
  tc.k_points = 25;

  imp::ImpConfig cfg;
  cfg.x = 0.2;
  cfg.iterations = 4;
  cfg.train = tc;

  const auto hh_init = nn_core::init_network(hh_spec, 11);
  const auto nl_init = nn_core::init_network(nl_spec, 12);
  const auto source = imp::run_imp(hh_init, hh, cfg);
  const auto native = imp::run_imp(nl_init, nl, cfg);
  REQUIRE(source.status == imp::RunStatus::kCompleted);
  REQUIRE(native.status == imp::RunStatus::kCompleted);

  const auto plan = make_transfer_plan(hh_spec, nl_spec);
  const auto table = transfer_experiment(source, nl, nl_init, plan, tc,
                                         native, 2.0);
  REQUIRE(table.rows.size() == source.records.size());
  CHECK(table.source_task == "henon_heiles");
  CHECK(table.target_task == "nl_oscillator");

  const double native_full = native.records[0].final_loss;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    CHECK(row.source_iter == static_cast<int>(i));
    CHECK(row.density <= 1.0);
    CHECK(row.density > 0.0);
    if (!row.failed) {
      CHECK(row.winning == (row.transferred_loss <= 2.0 * native_full));
    }
    // The paired native loss is one of the native records.
    bool found = false;
    for (const auto& rec : native.records) {
      found = found || rec.final_loss == row.native_loss;
    }
    CHECK(found);
  }

  // Row 0 transfers the full mask, whose density is exactly 1.
  CHECK(table.rows[0].density == 1.0);

  // max_rows limits the table prefix.
  const auto head = transfer_experiment(source, nl, nl_init, plan, tc,
                                        native, 2.0, 2);
  CHECK(head.rows.size() == 2);
}

TEST_CASE("self transfer reproduces the native run exactly") {
  auto nl = hnn_tasks::make_nl_task();
  nl.ic_constraint = true;
  NetworkSpec spec;
  spec.hidden_dims = {10, 10};
  spec.output_dim = 2;

  nn_core::TrainConfig tc;
  tc.epochs = 40;
  tc.k_points = 20;
  tc.backend = kernels::Backend::kScalar;

  imp::ImpConfig cfg;
  cfg.x = 0.25;
  cfg.iterations = 3;
  cfg.train = tc;

  const auto init = nn_core::init_network(spec, 19);
  const auto native = imp::run_imp(init, nl, cfg);
  REQUIRE(native.status == imp::RunStatus::kCompleted);

  const auto plan = make_transfer_plan(spec, spec);
  const auto table =
      transfer_experiment(native, nl, init, plan, tc, native, 1.0);
  REQUIRE(table.rows.size() == native.records.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    CHECK(table.rows[i].transferred_loss == native.records[i].final_loss);
    CHECK(table.rows[i].native_loss == native.records[i].final_loss);
    CHECK(table.rows[i].density ==
          doctest::Approx(native.records[i].density).epsilon(1e-15));
  }
}

TEST_CASE("transfer experiment validates its inputs") {
  auto nl = hnn_tasks::make_nl_task();
  NetworkSpec spec;
  spec.hidden_dims = {10, 10};
  spec.output_dim = 2;
  const auto init = nn_core::init_network(spec, 3);
  const auto plan = make_transfer_plan(spec, spec);
  nn_core::TrainConfig tc;
  tc.epochs = 5;
  tc.k_points = 15;

  imp::ImpTrace empty;
  CHECK_THROWS(transfer_experiment(empty, nl, init, plan, tc, empty));

  imp::ImpConfig cfg;
  cfg.iterations = 1;
  cfg.x = 0.1;
  cfg.train = tc;
  auto trace = imp::run_imp(init, nl, cfg);
  CHECK_THROWS(
      transfer_experiment(trace, nl, init, plan, tc, trace, 0.5));  // tol < 1

  auto no_masks = trace;
  for (auto& rec : no_masks.records) rec.mask = nn_core::Mask{};
  CHECK_THROWS(transfer_experiment(no_masks, nl, init, plan, tc, trace));
}
