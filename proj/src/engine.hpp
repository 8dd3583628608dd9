#pragma once

#include <vector>

#include "imprg/hnn_tasks.hpp"
#include "imprg/kernels.hpp"
#include "imprg/nn_core.hpp"

namespace imprg::nn_core::detail {

// Reusable forward/backward workspace over a flat parameter vector. The
// forward pass carries (value, d/dt) pairs; the backward pass runs reverse
// accumulation over that dual computation, so loss terms may depend on the
// outputs and on their time derivatives.
class Engine {
 public:
  Engine(const NetworkSpec& spec, const kernels::KernelTable& kt);

  // y/yt must hold output_dim entries. flat follows LayerLayout ordering and
  // must already have masked weights zeroed.
  void forward(const double* flat, double t, double* y, double* yt);

  // Accumulates d(point sq residual)/d(params) into grad (same flat layout)
  // and returns the point's squared residual sum.
  double point_loss_grad(const double* flat, const hnn_tasks::TaskBinding& task,
                         double t, double* grad);

  double point_loss(const double* flat, const hnn_tasks::TaskBinding& task,
                    double t);

  const LayerLayout& layout() const { return layout_; }

 private:
  void forward_store(const double* flat, double t);

  NetworkSpec spec_;
  LayerLayout layout_;
  const kernels::KernelTable& kt_;
  int n_layers_;

  // Per-layer output buffers for one point: activation value, its tangent,
  // phi'(z), and the raw tangent pre-activation.
  std::vector<std::vector<double>> a_;
  std::vector<std::vector<double>> at_;
  std::vector<std::vector<double>> d1_;
  std::vector<std::vector<double>> zt_;
  double in0_[1];
  double in0t_[1];

  // Backward scratch.
  std::vector<double> gz_;
  std::vector<double> gzt_;
  std::vector<double> ga_;
  std::vector<double> gat_;
};

// Gate vector over the full flat layout: mask bits as 0.0/1.0 for weights,
// 1.0 for biases.
std::vector<double> full_gate(const LayerLayout& layout, const Mask& mask);

// flat copy of params with masked weights zeroed.
std::vector<double> effective_values(const ParamState& params, const Mask& mask,
                                     const kernels::KernelTable& kt);

}  // namespace imprg::nn_core::detail
