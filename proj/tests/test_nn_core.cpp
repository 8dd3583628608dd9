#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "imprg/hnn_tasks.hpp"
#include "imprg/nn_core.hpp"

using namespace imprg;
using nn_core::Mask;
using nn_core::NetworkSpec;
using nn_core::ParamState;

namespace {

NetworkSpec small_spec(int out) {
  NetworkSpec spec;
  spec.hidden_dims = {8, 8};
  spec.output_dim = out;
  return spec;
}

Mask random_mask(const NetworkSpec& spec, std::mt19937_64& rng,
                 double keep = 0.6) {
  Mask mask = Mask::ones(spec);
  std::bernoulli_distribution dist(keep);
  for (auto& b : mask.bits) b = dist(rng) ? 1 : 0;
  // Keep at least one weight per layer so forward passes stay meaningful.
  std::int64_t off = 0;
  for (std::size_t l = 0; l < mask.shapes.size(); ++l) {
    const std::int64_t n = mask.layer_weight_count(static_cast<int>(l));
    bool any = false;
    for (std::int64_t i = 0; i < n; ++i) any = any || mask.bits[off + i];
    if (!any) mask.bits[off] = 1;
    off += n;
  }
  return mask;
}

}  // namespace

TEST_CASE("parameter counts for the two reference architectures") {
  NetworkSpec nl;
  nl.hidden_dims = {50, 50};
  nl.output_dim = 2;
  CHECK(nl.weight_count() == 2650);
  CHECK(nl.bias_count() == 102);
  CHECK(nl.param_count() == 2752);

  NetworkSpec hh = nl;
  hh.output_dim = 4;
  CHECK(hh.weight_count() == 2750);
  CHECK(hh.param_count() == 2854);
}

TEST_CASE("spec validation rejects degenerate dimensions") {
  NetworkSpec spec;
  spec.output_dim = 0;
  CHECK_THROWS(spec.validate());
  spec.output_dim = 2;
  spec.hidden_dims = {5, 0};
  CHECK_THROWS(spec.validate());
  spec.hidden_dims = {};
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("flat layout locates weights and biases") {
  NetworkSpec spec;
  spec.hidden_dims = {2};
  spec.output_dim = 2;
  const auto layout = nn_core::LayerLayout::for_spec(spec);
  CHECK(layout.n_weights == 6);
  CHECK(layout.n_params == 10);

  auto loc = layout.locate(0);
  CHECK(loc.layer == 0);
  CHECK(loc.is_bias == false);

  loc = layout.locate(3);  // W1 row 0 col 1
  CHECK(loc.layer == 1);
  CHECK(loc.row == 0);
  CHECK(loc.col == 1);

  loc = layout.locate(6);  // first bias
  CHECK(loc.layer == 0);
  CHECK(loc.is_bias == true);
  CHECK(loc.row == 0);

  loc = layout.locate(9);
  CHECK(loc.layer == 1);
  CHECK(loc.is_bias == true);
  CHECK(loc.row == 1);
}

TEST_CASE("init is deterministic, seed-sensitive and bounded by fan-in") {
  NetworkSpec spec;
  spec.hidden_dims = {50, 50};
  spec.output_dim = 2;
  const auto a = nn_core::init_network(spec, 42);
  const auto b = nn_core::init_network(spec, 42);
  const auto c = nn_core::init_network(spec, 43);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);

  for (int l = 0; l < a.layout.layer_count(); ++l) {
    const double bound = std::sqrt(1.0 / a.layout.cols[l]) + 1e-15;
    const double* w = a.weights(l);
    for (std::int64_t i = 0; i < a.layout.layer_weight_count(l); ++i) {
      CHECK(std::abs(w[i]) <= bound);
    }
  }
}

TEST_CASE("zero parameters give zero output and zero tangent") {
  const auto spec = small_spec(2);
  ParamState params;
  params.spec = spec;
  params.layout = nn_core::LayerLayout::for_spec(spec);
  params.values.assign(params.layout.n_params, 0.0);
  std::vector<double> out, out_dt;
  nn_core::forward_with_time_derivative(params, Mask::ones(spec), 1.3, out,
                                        out_dt);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out_dt[0] == 0.0);
  CHECK(out_dt[1] == 0.0);
}

TEST_CASE("a single linear layer reproduces w*t + b with tangent w") {
  NetworkSpec spec;  // 1 -> 1, no hidden layers
  ParamState params;
  params.spec = spec;
  params.layout = nn_core::LayerLayout::for_spec(spec);
  params.values = {1.75, -0.5};  // w, b
  std::vector<double> out, out_dt;
  nn_core::forward_with_time_derivative(params, Mask::ones(spec), 2.0, out,
                                        out_dt);
  CHECK(out[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(out_dt[0] == doctest::Approx(1.75).epsilon(1e-15));
}

TEST_CASE("dual value algebra") {
  using nn_core::DualValue;
  const DualValue t = DualValue::input(0.7);
  const DualValue c = DualValue::constant(2.0);
  const auto prod = t * t;
  CHECK(prod.primal == doctest::Approx(0.49));
  CHECK(prod.tangent == doctest::Approx(1.4));
  const auto s = c * t + DualValue::constant(1.0);
  CHECK(s.primal == doctest::Approx(2.4));
  CHECK(s.tangent == doctest::Approx(2.0));
  const auto th = tanh(t);
  CHECK(th.primal == doctest::Approx(std::tanh(0.7)));
  CHECK(th.tangent ==
        doctest::Approx(1.0 - std::tanh(0.7) * std::tanh(0.7)));
  const auto sn = sin(t);
  CHECK(sn.primal == doctest::Approx(std::sin(0.7)));
  CHECK(sn.tangent == doctest::Approx(std::cos(0.7)));
}

TEST_CASE("tangent matches finite differences of the primal") {
  std::mt19937_64 rng(5);
  for (const auto activation :
       {nn_core::Activation::kTanh, nn_core::Activation::kSin}) {
    auto spec = small_spec(3);
    spec.activation = activation;
    const auto params = nn_core::init_network(spec, rng());
    const auto mask = random_mask(spec, rng);
    const double h = 1e-4;
    for (int trial = 0; trial < 10; ++trial) {
      const double t = 0.1 + 0.37 * trial;
      std::vector<double> out, out_dt, hi, lo, tmp;
      nn_core::forward_with_time_derivative(params, mask, t, out, out_dt);
      nn_core::forward_with_time_derivative(params, mask, t + h, hi, tmp);
      nn_core::forward_with_time_derivative(params, mask, t - h, lo, tmp);
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double fd = (hi[i] - lo[i]) / (2 * h);
        CHECK(std::abs(out_dt[i] - fd) <=
              1e-5 * std::max(std::abs(out_dt[i]) + std::abs(fd), 1e-5));
      }
    }
  }
}

TEST_CASE("reverse-mode gradient matches finite differences") {
  std::mt19937_64 rng(9);
  auto nl = hnn_tasks::make_nl_task();
  auto hh = hnn_tasks::make_hh_task();
  nl.ic_constraint = true;
  for (const auto* binding : {&nl, &hh}) {
    const auto spec = small_spec(binding->arity());
    auto params = nn_core::init_network(spec, rng());
    const auto mask = random_mask(spec, rng);
    const auto grid =
        hnn_tasks::make_time_grid(binding->t0, binding->t_max, 16);
    const auto lg = nn_core::loss_and_gradient(params, mask, grid, *binding);
    REQUIRE(lg.grad.size() == params.values.size());

    const double h = 1e-5;
    for (std::int64_t i = 0; i < params.layout.n_params; ++i) {
      const bool masked =
          i < params.layout.n_weights && mask.bits[i] == 0;
      if (masked) {
        CHECK(lg.grad[i] == 0.0);
        continue;
      }
      auto perturbed = params;
      perturbed.values[i] += h;
      const double up = nn_core::loss_only(perturbed, mask, grid, *binding);
      perturbed.values[i] -= 2 * h;
      const double dn = nn_core::loss_only(perturbed, mask, grid, *binding);
      const double fd = (up - dn) / (2 * h);
      CHECK(std::abs(lg.grad[i] - fd) <=
            1e-4 * std::max(std::abs(lg.grad[i]) + std::abs(fd), 1e-6));
    }
  }
}

TEST_CASE("masked weights behave exactly like zeroed weights") {
  std::mt19937_64 rng(13);
  const auto spec = small_spec(2);
  const auto params = nn_core::init_network(spec, 21);
  const auto mask = random_mask(spec, rng, 0.5);

  auto zeroed = params;
  for (std::int64_t i = 0; i < zeroed.layout.n_weights; ++i) {
    if (mask.bits[i] == 0) zeroed.values[i] = 0.0;
  }
  std::vector<double> o1, d1, o2, d2;
  nn_core::forward_with_time_derivative(params, mask, 0.83, o1, d1);
  nn_core::forward_with_time_derivative(zeroed, Mask::ones(spec), 0.83, o2,
                                        d2);
  CHECK(std::memcmp(o1.data(), o2.data(), o1.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(d1.data(), d2.data(), d1.size() * sizeof(double)) == 0);
}

TEST_CASE("training lowers the loss and keeps pruned weights at zero") {
  std::mt19937_64 rng(17);
  auto binding = hnn_tasks::make_nl_task();
  binding.ic_constraint = true;
  const auto spec = small_spec(2);
  const auto params = nn_core::init_network(spec, 31);
  const auto mask = random_mask(spec, rng, 0.8);

  nn_core::TrainConfig cfg;
  cfg.epochs = 500;
  cfg.k_points = 50;
  const auto grid = hnn_tasks::make_time_grid(binding.t0, binding.t_max, 50);
  const double initial = nn_core::loss_only(params, mask, grid, binding);
  const auto result = nn_core::train(params, mask, binding, cfg);

  CHECK(result.status == nn_core::TrainStatus::kOk);
  CHECK(result.final_loss < 0.5 * initial);
  CHECK(result.final_loss ==
        doctest::Approx(nn_core::loss_only(result.params, mask, grid, binding))
            .epsilon(1e-12));
  for (std::int64_t i = 0; i < params.layout.n_weights; ++i) {
    if (mask.bits[i] == 0) CHECK(result.params.values[i] == 0.0);
  }
}

TEST_CASE("training is deterministic for a fixed backend") {
  auto binding = hnn_tasks::make_nl_task();
  binding.ic_constraint = true;
  const auto spec = small_spec(2);
  const auto params = nn_core::init_network(spec, 77);
  const auto mask = Mask::ones(spec);
  nn_core::TrainConfig cfg;
  cfg.epochs = 120;
  cfg.k_points = 40;
  cfg.backend = kernels::Backend::kScalar;
  const auto a = nn_core::train(params, mask, binding, cfg);
  const auto b = nn_core::train(params, mask, binding, cfg);
  CHECK(a.params.values == b.params.values);
  CHECK(a.final_loss == b.final_loss);
}

TEST_CASE("train rejects zero epochs and reports divergence") {
  auto binding = hnn_tasks::make_nl_task();
  const auto spec = small_spec(2);
  const auto params = nn_core::init_network(spec, 3);
  const auto mask = Mask::ones(spec);

  nn_core::TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS(nn_core::train(params, mask, binding, cfg));

  cfg.epochs = 400;
  cfg.lr = 1e6;  // guaranteed blow-up
  cfg.k_points = 30;
  cfg.divergence_threshold = 1e4;
  const auto result = nn_core::train(params, mask, binding, cfg);
  CHECK(result.status == nn_core::TrainStatus::kDiverged);
  CHECK(result.diverged_epoch >= 0);
}
