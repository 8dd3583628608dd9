#include "imprg/nn_core.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "engine.hpp"
#include "imprg/hnn_tasks.hpp"

namespace imprg::nn_core {

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "sin") return Activation::kSin;
  throw std::invalid_argument("unknown activation: " + name);
}

const char* activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "sin";
}

void NetworkSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (output_dim < 1) throw std::invalid_argument("output_dim must be >= 1");
  for (int h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("hidden dims must be >= 1");
  }
}

std::vector<int> NetworkSpec::layer_dims() const {
  std::vector<int> dims;
  dims.reserve(hidden_dims.size() + 2);
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(output_dim);
  return dims;
}

int NetworkSpec::layer_count() const {
  return static_cast<int>(hidden_dims.size()) + 1;
}

std::int64_t NetworkSpec::weight_count() const {
  const auto dims = layer_dims();
  std::int64_t n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    n += static_cast<std::int64_t>(dims[l + 1]) * dims[l];
  }
  return n;
}

std::int64_t NetworkSpec::bias_count() const {
  const auto dims = layer_dims();
  std::int64_t n = 0;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    n += dims[l];
  }
  return n;
}

std::int64_t NetworkSpec::param_count() const {
  return weight_count() + bias_count();
}

LayerLayout LayerLayout::for_spec(const NetworkSpec& spec) {
  spec.validate();
  const auto dims = spec.layer_dims();
  LayerLayout layout;
  const int n_layers = static_cast<int>(dims.size()) - 1;
  layout.rows.resize(n_layers);
  layout.cols.resize(n_layers);
  layout.weight_offset.resize(n_layers);
  layout.bias_offset.resize(n_layers);
  std::int64_t off = 0;
  for (int l = 0; l < n_layers; ++l) {
    layout.rows[l] = dims[l + 1];
    layout.cols[l] = dims[l];
    layout.weight_offset[l] = off;
    off += static_cast<std::int64_t>(dims[l + 1]) * dims[l];
  }
  layout.n_weights = off;
  for (int l = 0; l < n_layers; ++l) {
    layout.bias_offset[l] = off;
    off += dims[l + 1];
  }
  layout.n_params = off;
  return layout;
}

FlatLocation LayerLayout::locate(std::int64_t flat) const {
  if (flat < 0 || flat >= n_params) {
    throw std::invalid_argument("flat index out of range");
  }
  const int n_layers = layer_count();
  if (flat < n_weights) {
    for (int l = n_layers - 1; l >= 0; --l) {
      if (flat >= weight_offset[l]) {
        const std::int64_t rel = flat - weight_offset[l];
        return {l, static_cast<int>(rel / cols[l]),
                static_cast<int>(rel % cols[l]), false};
      }
    }
  }
  for (int l = n_layers - 1; l >= 0; --l) {
    if (flat >= bias_offset[l]) {
      return {l, static_cast<int>(flat - bias_offset[l]), 0, true};
    }
  }
  throw std::logic_error("unreachable");
}

Mask Mask::ones(const NetworkSpec& spec) {
  const auto layout = LayerLayout::for_spec(spec);
  std::vector<LayerShape> shapes(layout.layer_count());
  for (int l = 0; l < layout.layer_count(); ++l) {
    shapes[l] = {layout.rows[l], layout.cols[l]};
  }
  return ones(std::move(shapes));
}

Mask Mask::ones(std::vector<LayerShape> shapes) {
  Mask m;
  m.shapes = std::move(shapes);
  std::int64_t n = 0;
  for (const auto& s : m.shapes) {
    n += static_cast<std::int64_t>(s.rows) * s.cols;
  }
  m.bits.assign(n, 1);
  m.validate();
  return m;
}

void Mask::validate() const {
  if (shapes.empty()) throw std::invalid_argument("mask needs layer shapes");
  std::int64_t n = 0;
  for (const auto& s : shapes) {
    if (s.rows < 1 || s.cols < 1) {
      throw std::invalid_argument("mask layer shapes must be positive");
    }
    n += static_cast<std::int64_t>(s.rows) * s.cols;
  }
  if (static_cast<std::int64_t>(bits.size()) != n) {
    throw std::invalid_argument("mask bit count does not match shapes");
  }
  for (std::uint8_t b : bits) {
    if (b > 1) throw std::invalid_argument("mask bits must be 0 or 1");
  }
}

std::int64_t Mask::weight_count() const {
  return static_cast<std::int64_t>(bits.size());
}

std::int64_t Mask::layer_offset(int layer) const {
  std::int64_t off = 0;
  for (int l = 0; l < layer; ++l) {
    off += layer_weight_count(l);
  }
  return off;
}

std::int64_t Mask::surviving() const {
  std::int64_t n = 0;
  for (std::uint8_t b : bits) n += b;
  return n;
}

std::int64_t Mask::surviving_in_layer(int layer) const {
  const std::int64_t off = layer_offset(layer);
  const std::int64_t cnt = layer_weight_count(layer);
  std::int64_t n = 0;
  for (std::int64_t i = off; i < off + cnt; ++i) n += bits[i];
  return n;
}

bool Mask::matches(const NetworkSpec& spec) const {
  const auto dims = spec.layer_dims();
  if (shapes.size() + 1 != dims.size()) return false;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    if (shapes[l].rows != dims[l + 1] || shapes[l].cols != dims[l]) return false;
  }
  return true;
}

namespace {

// Uniform double in [0, 1) from the generator's full 64-bit output, so that
// draws are identical on every platform.
inline double unit_real(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

ParamState init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamState state;
  state.spec = spec;
  state.layout = LayerLayout::for_spec(spec);
  state.values.assign(state.layout.n_params, 0.0);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < state.layout.layer_count(); ++l) {
    const int rows = state.layout.rows[l];
    const int cols = state.layout.cols[l];
    const double bound = std::sqrt(1.0 / cols);
    double* w = state.weights(l);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(rows) * cols; ++i) {
      w[i] = (2.0 * unit_real(rng) - 1.0) * bound;
    }
    double* b = state.biases(l);
    for (int i = 0; i < rows; ++i) {
      b[i] = (2.0 * unit_real(rng) - 1.0) * bound;
    }
  }
  return state;
}

void forward_with_time_derivative(const ParamState& params, const Mask& mask,
                                  double t, std::vector<double>& out,
                                  std::vector<double>& out_dt) {
  const auto& kt = kernels::resolve(kernels::Backend::kAuto);
  detail::Engine engine(params.spec, kt);
  const auto flat = detail::effective_values(params, mask, kt);
  out.resize(params.spec.output_dim);
  out_dt.resize(params.spec.output_dim);
  engine.forward(flat.data(), t, out.data(), out_dt.data());
}

LossGrad loss_and_gradient(const ParamState& params, const Mask& mask,
                           const hnn_tasks::TimeGrid& grid,
                           const hnn_tasks::TaskBinding& task,
                           kernels::Backend backend) {
  if (grid.points.empty()) {
    throw std::invalid_argument("loss needs a non-empty grid");
  }
  if (params.spec.output_dim != task.arity()) {
    throw std::invalid_argument("network output dim does not match task arity");
  }
  const auto& kt = kernels::resolve(backend);
  detail::Engine engine(params.spec, kt);
  const auto flat = detail::effective_values(params, mask, kt);
  LossGrad out;
  out.grad.assign(params.layout.n_params, 0.0);
  double sum = 0.0;
  for (double t : grid.points) {
    sum += engine.point_loss_grad(flat.data(), task, t, out.grad.data());
  }
  const double inv_k = 1.0 / static_cast<double>(grid.points.size());
  out.loss = sum * inv_k;
  for (double& g : out.grad) {
    g *= inv_k;
  }
  // Gradients were taken w.r.t. masked weights; the chain rule through the
  // gate zeroes the masked coordinates.
  std::vector<double> gate(params.layout.n_weights);
  for (std::int64_t i = 0; i < params.layout.n_weights; ++i) {
    gate[i] = mask.bits[i] != 0 ? 1.0 : 0.0;
  }
  kt.apply_mask(out.grad.data(), gate.data(),
                static_cast<int>(params.layout.n_weights));
  return out;
}

double loss_only(const ParamState& params, const Mask& mask,
                 const hnn_tasks::TimeGrid& grid,
                 const hnn_tasks::TaskBinding& task,
                 kernels::Backend backend) {
  if (grid.points.empty()) {
    throw std::invalid_argument("loss needs a non-empty grid");
  }
  if (params.spec.output_dim != task.arity()) {
    throw std::invalid_argument("network output dim does not match task arity");
  }
  const auto& kt = kernels::resolve(backend);
  detail::Engine engine(params.spec, kt);
  const auto flat = detail::effective_values(params, mask, kt);
  double sum = 0.0;
  for (double t : grid.points) {
    sum += engine.point_loss(flat.data(), task, t);
  }
  return sum / static_cast<double>(grid.points.size());
}

TrainResult train(const ParamState& params, const Mask& mask,
                  const hnn_tasks::TaskBinding& task,
                  const TrainConfig& config) {
  if (config.epochs < 1) {
    throw std::invalid_argument("train needs epochs >= 1");
  }
  if (!(config.lr > 0.0)) {
    throw std::invalid_argument("train needs lr > 0");
  }
  if (params.spec.output_dim != task.arity()) {
    throw std::invalid_argument("network output dim does not match task arity");
  }
  task.validate();
  const auto& kt = kernels::resolve(config.backend);
  const auto grid = hnn_tasks::make_time_grid(task.t0, task.t_max,
                                              config.k_points);
  detail::Engine engine(params.spec, kt);

  TrainResult result;
  result.params = params;
  result.params.values = detail::effective_values(params, mask, kt);
  double* flat = result.params.values.data();
  const int n = static_cast<int>(params.layout.n_params);

  const std::vector<double> gate = detail::full_gate(params.layout, mask);
  std::vector<double> grad(n);
  std::vector<double> m1(n, 0.0);
  std::vector<double> m2(n, 0.0);
  const double inv_k = 1.0 / static_cast<double>(grid.points.size());

  double bc1_pow = 1.0;
  double bc2_pow = 1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double sum = 0.0;
    for (double t : grid.points) {
      sum += engine.point_loss_grad(flat, task, t, grad.data());
    }
    const double loss = sum * inv_k;
    if (!std::isfinite(loss) || loss > config.divergence_threshold) {
      result.final_loss = loss;
      result.status = TrainStatus::kDiverged;
      result.diverged_epoch = epoch;
      return result;
    }
    for (double& g : grad) {
      g *= inv_k;
    }
    bc1_pow *= kAdamBeta1;
    bc2_pow *= kAdamBeta2;
    kt.adam_step(flat, m1.data(), m2.data(), grad.data(), gate.data(), n,
                 config.lr, kAdamBeta1, kAdamBeta2, kAdamEps,
                 1.0 / (1.0 - bc1_pow), 1.0 / (1.0 - bc2_pow));
  }

  double sum = 0.0;
  for (double t : grid.points) {
    sum += engine.point_loss(flat, task, t);
  }
  result.final_loss = sum * inv_k;
  if (!std::isfinite(result.final_loss) ||
      result.final_loss > config.divergence_threshold) {
    result.status = TrainStatus::kDiverged;
    result.diverged_epoch = config.epochs;
  }
  return result;
}

}  // namespace imprg::nn_core
