#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "imprg/kernels.hpp"

namespace imprg::hnn_tasks {
struct TaskBinding;
struct TimeGrid;
}  // namespace imprg::hnn_tasks

namespace imprg::nn_core {

enum class Activation { kTanh, kSin };

Activation parse_activation(const std::string& name);
const char* activation_name(Activation a);

// Fully connected net: input -> hidden... -> output. The activation is
// applied after every layer except the last, which stays linear.
struct NetworkSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int output_dim = 1;
  Activation activation = Activation::kTanh;

  void validate() const;
  // [input, hidden..., output]
  std::vector<int> layer_dims() const;
  // number of linear layers
  int layer_count() const;
  std::int64_t weight_count() const;
  std::int64_t bias_count() const;
  std::int64_t param_count() const;

  bool operator==(const NetworkSpec&) const = default;
};

struct FlatLocation {
  int layer = 0;
  int row = 0;
  int col = 0;       // meaningful for weights only
  bool is_bias = false;
};

// Flat parameter layout: [W0, W1, ..., b0, b1, ...], each W row-major.
// Mask bits use the same ordering restricted to the weight prefix.
struct LayerLayout {
  std::vector<int> rows;
  std::vector<int> cols;
  std::vector<std::int64_t> weight_offset;  // into the flat vector
  std::vector<std::int64_t> bias_offset;
  std::int64_t n_weights = 0;
  std::int64_t n_params = 0;

  static LayerLayout for_spec(const NetworkSpec& spec);
  int layer_count() const { return static_cast<int>(rows.size()); }
  std::int64_t layer_weight_count(int layer) const {
    return static_cast<std::int64_t>(rows[layer]) * cols[layer];
  }
  FlatLocation locate(std::int64_t flat) const;

  bool operator==(const LayerLayout&) const = default;
};

struct ParamState {
  NetworkSpec spec;
  LayerLayout layout;
  std::vector<double> values;  // length layout.n_params

  double* weights(int layer) { return values.data() + layout.weight_offset[layer]; }
  const double* weights(int layer) const {
    return values.data() + layout.weight_offset[layer];
  }
  double* biases(int layer) { return values.data() + layout.bias_offset[layer]; }
  const double* biases(int layer) const {
    return values.data() + layout.bias_offset[layer];
  }
};

struct LayerShape {
  int rows = 0;
  int cols = 0;
  bool operator==(const LayerShape&) const = default;
};

// Per-weight keep/prune bits, aligned with the weight prefix of the flat
// parameter layout. Biases are never masked.
struct Mask {
  std::vector<LayerShape> shapes;
  std::vector<std::uint8_t> bits;  // 0 or 1 per weight

  static Mask ones(const NetworkSpec& spec);
  static Mask ones(std::vector<LayerShape> shapes);

  void validate() const;
  std::int64_t weight_count() const;
  std::int64_t layer_weight_count(int layer) const {
    return static_cast<std::int64_t>(shapes[layer].rows) * shapes[layer].cols;
  }
  std::int64_t layer_offset(int layer) const;
  std::int64_t surviving() const;
  std::int64_t surviving_in_layer(int layer) const;
  bool matches(const NetworkSpec& spec) const;

  bool operator==(const Mask&) const = default;
};

// Forward-mode scalar: value plus d(value)/dt.
struct DualValue {
  double primal = 0.0;
  double tangent = 0.0;

  static DualValue constant(double v) { return {v, 0.0}; }
  static DualValue input(double v) { return {v, 1.0}; }
};

inline DualValue operator+(DualValue a, DualValue b) {
  return {a.primal + b.primal, a.tangent + b.tangent};
}
inline DualValue operator-(DualValue a, DualValue b) {
  return {a.primal - b.primal, a.tangent - b.tangent};
}
inline DualValue operator*(DualValue a, DualValue b) {
  return {a.primal * b.primal, a.tangent * b.primal + a.primal * b.tangent};
}
inline DualValue operator*(double c, DualValue a) {
  return {c * a.primal, c * a.tangent};
}
inline DualValue tanh(DualValue a) {
  const double th = std::tanh(a.primal);
  return {th, (1.0 - th * th) * a.tangent};
}
inline DualValue sin(DualValue a) {
  return {std::sin(a.primal), std::cos(a.primal) * a.tangent};
}

// Uniform init in [-sqrt(1/fan_in), sqrt(1/fan_in)] per layer, weights then
// bias, layers in order, single seeded generator.
ParamState init_network(const NetworkSpec& spec, std::uint64_t seed);

// Network output and its time derivative at scalar input t, with weights
// gated by the mask. Output vectors are sized spec.output_dim.
void forward_with_time_derivative(const ParamState& params, const Mask& mask,
                                  double t, std::vector<double>& out,
                                  std::vector<double>& out_dt);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // flat layout, masked coordinates zero
};

LossGrad loss_and_gradient(const ParamState& params, const Mask& mask,
                           const hnn_tasks::TimeGrid& grid,
                           const hnn_tasks::TaskBinding& task,
                           kernels::Backend backend = kernels::Backend::kAuto);

double loss_only(const ParamState& params, const Mask& mask,
                 const hnn_tasks::TimeGrid& grid,
                 const hnn_tasks::TaskBinding& task,
                 kernels::Backend backend = kernels::Backend::kAuto);

struct TrainConfig {
  int epochs = 0;
  double lr = 8.0e-3;
  int k_points = 200;
  double divergence_threshold = 1.0e6;
  kernels::Backend backend = kernels::Backend::kAuto;
};

enum class TrainStatus { kOk, kDiverged };

struct TrainResult {
  ParamState params;
  double final_loss = 0.0;
  TrainStatus status = TrainStatus::kOk;
  int diverged_epoch = -1;  // epoch index at which the guard fired
};

// Full-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) on the residual loss of
// `task` over an equispaced k_points grid. Masked weights contribute nothing:
// their gradient is discarded and their moments stay frozen, so they remain
// exactly 0.0 throughout. Deterministic given (params, mask, config) and a
// fixed backend.
TrainResult train(const ParamState& params, const Mask& mask,
                  const hnn_tasks::TaskBinding& task, const TrainConfig& config);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1.0e-8;

}  // namespace imprg::nn_core
