#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "imprg/hnn_tasks.hpp"
#include "imprg/kernels.hpp"
#include "imprg/nn_core.hpp"

using namespace imprg;
using kernels::KernelTable;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::vector<double> random_gate(std::mt19937_64& rng, int n) {
  std::bernoulli_distribution dist(0.7);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng) ? 1.0 : 0.0;
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("scalar table is always available") {
  const KernelTable& t = kernels::scalar_table();
  CHECK(std::string(t.name) == "scalar");
  CHECK(t.dual_matvec != nullptr);
  CHECK(t.masked_abs_sum != nullptr);
}

TEST_CASE("resolve honours forced backends") {
  CHECK(std::string(kernels::resolve(kernels::Backend::kScalar).name) ==
        "scalar");
  if (kernels::avx2_table() != nullptr) {
    CHECK(std::string(kernels::resolve(kernels::Backend::kAvx2).name) ==
          "avx2");
  } else {
    CHECK_THROWS(kernels::resolve(kernels::Backend::kAvx2));
  }
}

TEST_CASE("parse_backend round trip and rejection") {
  CHECK(kernels::parse_backend("auto") == kernels::Backend::kAuto);
  CHECK(kernels::parse_backend("scalar") == kernels::Backend::kScalar);
  CHECK(kernels::parse_backend("avx2") == kernels::Backend::kAvx2);
  CHECK_THROWS(kernels::parse_backend("sse9"));
  CHECK(std::string(kernels::backend_name(kernels::Backend::kScalar)) ==
        "scalar");
}

TEST_CASE("scalar dual_matvec matches a naive loop") {
  std::mt19937_64 rng(11);
  const int rows = 7, cols = 13;
  auto w = random_vec(rng, rows * cols);
  auto a = random_vec(rng, cols);
  auto at = random_vec(rng, cols);
  auto bias = random_vec(rng, rows);
  std::vector<double> z(rows), zt(rows);
  kernels::scalar_table().dual_matvec(w.data(), a.data(), at.data(),
                                      bias.data(), z.data(), zt.data(), rows,
                                      cols);
  for (int i = 0; i < rows; ++i) {
    double s = bias[i], st = 0.0;
    for (int j = 0; j < cols; ++j) {
      s += w[i * cols + j] * a[j];
      st += w[i * cols + j] * at[j];
    }
    CHECK(z[i] == doctest::Approx(s).epsilon(1e-14));
    CHECK(zt[i] == doctest::Approx(st).epsilon(1e-14));
  }
}

TEST_CASE("scalar adam_step freezes gated coordinates and moves the rest") {
  const int n = 6;
  std::vector<double> w = {1, -2, 3, -4, 5, -6};
  std::vector<double> m(n, 0.0), v(n, 0.0);
  std::vector<double> g = {0.5, 0.5, -0.5, 0.5, -0.25, 0.125};
  std::vector<double> gate = {1, 0, 1, 0, 1, 1};
  auto w0 = w;
  kernels::scalar_table().adam_step(w.data(), m.data(), v.data(), g.data(),
                                    gate.data(), n, 1e-2, 0.9, 0.999, 1e-8,
                                    1.0 / (1 - 0.9), 1.0 / (1 - 0.999));
  for (int i = 0; i < n; ++i) {
    if (gate[i] == 0.0) {
      CHECK(w[i] == w0[i]);
      CHECK(m[i] == 0.0);
      CHECK(v[i] == 0.0);
    } else {
      CHECK(w[i] != w0[i]);
      // First step with bias correction moves by almost exactly lr against
      // the gradient sign.
      CHECK(std::abs((w0[i] - w[i]) - 1e-2 * (g[i] > 0 ? 1.0 : -1.0)) < 1e-6);
    }
  }
}

TEST_CASE("masked_abs_sum ignores gated-off weights") {
  std::vector<double> w = {1.0, -2.0, 3.0, -4.0};
  std::vector<double> gate = {1.0, 0.0, 1.0, 1.0};
  const double s =
      kernels::scalar_table().masked_abs_sum(w.data(), gate.data(), 4);
  CHECK(s == doctest::Approx(8.0).epsilon(1e-15));
}

TEST_CASE("avx2 elementwise kernels are bit-exact against scalar") {
  const KernelTable* wide = kernels::avx2_table();
  if (wide == nullptr) return;  // nothing to compare on this machine
  const KernelTable& ref = kernels::scalar_table();
  std::mt19937_64 rng(23);

  for (int trial = 0; trial < 50; ++trial) {
    // Sizes straddle the 4-lane boundary to exercise tails.
    const int n = 1 + static_cast<int>(rng() % 70);

    auto x = random_vec(rng, n);
    auto y0a = random_vec(rng, n);
    auto y1a = random_vec(rng, n);
    auto y0b = y0a;
    auto y1b = y1a;
    ref.axpy2(y0a.data(), y1a.data(), x.data(), 0.37, -1.25, n);
    wide->axpy2(y0b.data(), y1b.data(), x.data(), 0.37, -1.25, n);
    CHECK(bitwise_equal(y0a, y0b));
    CHECK(bitwise_equal(y1a, y1b));

    auto a = random_vec(rng, n);
    auto at = random_vec(rng, n);
    auto dwa = random_vec(rng, n);
    auto dwb = dwa;
    ref.weight_grad_accum(dwa.data(), a.data(), at.data(), 1.5, -0.75, n);
    wide->weight_grad_accum(dwb.data(), a.data(), at.data(), 1.5, -0.75, n);
    CHECK(bitwise_equal(dwa, dwb));

    auto w = random_vec(rng, n);
    auto gate = random_gate(rng, n);
    auto wa = w;
    auto wb = w;
    ref.apply_mask(wa.data(), gate.data(), n);
    wide->apply_mask(wb.data(), gate.data(), n);
    CHECK(bitwise_equal(wa, wb));

    auto m = random_vec(rng, n, 0.01);
    auto v = random_vec(rng, n, 0.0);
    for (auto& e : v) e = std::abs(e) + 1e-4;
    auto g = random_vec(rng, n);
    auto ma = m, mb = m, va = v, vb = v;
    wa = w;
    wb = w;
    ref.adam_step(wa.data(), ma.data(), va.data(), g.data(), gate.data(), n,
                  8e-3, 0.9, 0.999, 1e-8, 1.0 / (1 - 0.81), 1.0 / (1 - 0.998));
    wide->adam_step(wb.data(), mb.data(), vb.data(), g.data(), gate.data(), n,
                    8e-3, 0.9, 0.999, 1e-8, 1.0 / (1 - 0.81),
                    1.0 / (1 - 0.998));
    CHECK(bitwise_equal(wa, wb));
    CHECK(bitwise_equal(ma, mb));
    CHECK(bitwise_equal(va, vb));
  }
}

TEST_CASE("avx2 reductions agree with scalar within accumulation slack") {
  const KernelTable* wide = kernels::avx2_table();
  if (wide == nullptr) return;
  const KernelTable& ref = kernels::scalar_table();
  std::mt19937_64 rng(29);

  for (int trial = 0; trial < 50; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 9);
    const int cols = 1 + static_cast<int>(rng() % 90);
    auto w = random_vec(rng, rows * cols);
    auto a = random_vec(rng, cols);
    auto at = random_vec(rng, cols);
    auto bias = random_vec(rng, rows);
    std::vector<double> za(rows), zta(rows), zb(rows), ztb(rows);
    ref.dual_matvec(w.data(), a.data(), at.data(), bias.data(), za.data(),
                    zta.data(), rows, cols);
    wide->dual_matvec(w.data(), a.data(), at.data(), bias.data(), zb.data(),
                      ztb.data(), rows, cols);
    for (int i = 0; i < rows; ++i) {
      CHECK(za[i] == doctest::Approx(zb[i]).epsilon(1e-12));
      CHECK(zta[i] == doctest::Approx(ztb[i]).epsilon(1e-12));
    }

    const int n = 1 + static_cast<int>(rng() % 120);
    auto ww = random_vec(rng, n);
    auto gate = random_gate(rng, n);
    const double sa = ref.masked_abs_sum(ww.data(), gate.data(), n);
    const double sb = wide->masked_abs_sum(ww.data(), gate.data(), n);
    CHECK(sa == doctest::Approx(sb).epsilon(1e-12));
  }
}

TEST_CASE("backends agree end to end on loss, gradient and training") {
  if (kernels::avx2_table() == nullptr) return;
  auto binding = hnn_tasks::make_nl_task();
  binding.ic_constraint = true;
  nn_core::NetworkSpec spec;
  spec.hidden_dims = {20, 20};
  spec.output_dim = 2;
  auto params = nn_core::init_network(spec, 3);
  auto mask = nn_core::Mask::ones(spec);
  auto grid = hnn_tasks::make_time_grid(binding.t0, binding.t_max, 60);

  const auto gs = nn_core::loss_and_gradient(params, mask, grid, binding,
                                             kernels::Backend::kScalar);
  const auto gv = nn_core::loss_and_gradient(params, mask, grid, binding,
                                             kernels::Backend::kAvx2);
  CHECK(gs.loss == doctest::Approx(gv.loss).epsilon(1e-12));
  for (std::size_t i = 0; i < gs.grad.size(); ++i) {
    CHECK(std::abs(gs.grad[i] - gv.grad[i]) < 1e-10);
  }

  nn_core::TrainConfig cfg;
  cfg.epochs = 300;
  cfg.k_points = 60;
  cfg.backend = kernels::Backend::kScalar;
  const auto rs = nn_core::train(params, mask, binding, cfg);
  cfg.backend = kernels::Backend::kAvx2;
  const auto rv = nn_core::train(params, mask, binding, cfg);
  CHECK(rs.status == nn_core::TrainStatus::kOk);
  CHECK(rv.status == nn_core::TrainStatus::kOk);
  CHECK(rs.final_loss ==
        doctest::Approx(rv.final_loss).epsilon(1e-6));
}
