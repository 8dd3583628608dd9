#include "engine.hpp"

#include <cmath>
#include <stdexcept>

namespace imprg::nn_core::detail {

Engine::Engine(const NetworkSpec& spec, const kernels::KernelTable& kt)
    : spec_(spec), layout_(LayerLayout::for_spec(spec)), kt_(kt) {
  spec_.validate();
  n_layers_ = layout_.layer_count();
  a_.resize(n_layers_);
  at_.resize(n_layers_);
  d1_.resize(n_layers_);
  zt_.resize(n_layers_);
  int widest = 1;
  for (int l = 0; l < n_layers_; ++l) {
    const int width = layout_.rows[l];
    a_[l].resize(width);
    at_[l].resize(width);
    d1_[l].resize(width);
    zt_[l].resize(width);
    widest = std::max(widest, width);
  }
  gz_.resize(widest);
  gzt_.resize(widest);
  ga_.resize(widest);
  gat_.resize(widest);
}

void Engine::forward_store(const double* flat, double t) {
  in0_[0] = t;
  in0t_[0] = 1.0;
  const double* in = in0_;
  const double* int_ = in0t_;
  for (int l = 0; l < n_layers_; ++l) {
    const int rows = layout_.rows[l];
    const int cols = layout_.cols[l];
    kt_.dual_matvec(flat + layout_.weight_offset[l], in, int_,
                    flat + layout_.bias_offset[l], a_[l].data(), zt_[l].data(),
                    rows, cols);
    if (l < n_layers_ - 1) {
      if (spec_.activation == Activation::kTanh) {
        for (int j = 0; j < rows; ++j) {
          const double v = std::tanh(a_[l][j]);
          a_[l][j] = v;
          d1_[l][j] = 1.0 - v * v;
          at_[l][j] = d1_[l][j] * zt_[l][j];
        }
      } else {
        for (int j = 0; j < rows; ++j) {
          const double z = a_[l][j];
          a_[l][j] = std::sin(z);
          d1_[l][j] = std::cos(z);
          at_[l][j] = d1_[l][j] * zt_[l][j];
        }
      }
    } else {
      for (int j = 0; j < rows; ++j) {
        at_[l][j] = zt_[l][j];
      }
    }
    in = a_[l].data();
    int_ = at_[l].data();
  }
}

void Engine::forward(const double* flat, double t, double* y, double* yt) {
  forward_store(flat, t);
  const int out = layout_.rows[n_layers_ - 1];
  for (int j = 0; j < out; ++j) {
    y[j] = a_[n_layers_ - 1][j];
    yt[j] = at_[n_layers_ - 1][j];
  }
}

double Engine::point_loss(const double* flat, const hnn_tasks::TaskBinding& task,
                          double t) {
  forward_store(flat, t);
  const int out = layout_.rows[n_layers_ - 1];
  double s[4];
  double sd[4];
  hnn_tasks::task_state(task, t, a_[n_layers_ - 1].data(),
                        at_[n_layers_ - 1].data(), s, sd);
  (void)out;
  return hnn_tasks::point_sq_residual(task.task, s, sd);
}

double Engine::point_loss_grad(const double* flat,
                               const hnn_tasks::TaskBinding& task, double t,
                               double* grad) {
  forward_store(flat, t);
  const int last = n_layers_ - 1;
  const double sq = hnn_tasks::residual_seeds(
      task, t, a_[last].data(), at_[last].data(), gz_.data(), gzt_.data());

  for (int l = last; l >= 0; --l) {
    const int rows = layout_.rows[l];
    const int cols = layout_.cols[l];
    const double* in_a = l > 0 ? a_[l - 1].data() : in0_;
    const double* in_at = l > 0 ? at_[l - 1].data() : in0t_;
    double* dw = grad + layout_.weight_offset[l];
    double* db = grad + layout_.bias_offset[l];
    const double* w = flat + layout_.weight_offset[l];
    if (l > 0) {
      for (int j = 0; j < cols; ++j) {
        ga_[j] = 0.0;
        gat_[j] = 0.0;
      }
    }
    for (int i = 0; i < rows; ++i) {
      kt_.weight_grad_accum(dw + static_cast<long>(i) * cols, in_a, in_at,
                            gz_[i], gzt_[i], cols);
      db[i] += gz_[i];
      if (l > 0) {
        kt_.axpy2(ga_.data(), gat_.data(), w + static_cast<long>(i) * cols,
                  gz_[i], gzt_[i], cols);
      }
    }
    if (l > 0) {
      // Through the activation of layer l-1:
      //   a = phi(z), at = phi'(z) zt
      //   gz = phi' ga + phi'' zt gat,  gzt = phi' gat
      const bool is_tanh = spec_.activation == Activation::kTanh;
      for (int j = 0; j < cols; ++j) {
        const double d1 = d1_[l - 1][j];
        const double phi2 = is_tanh ? -2.0 * a_[l - 1][j] * d1 : -a_[l - 1][j];
        gz_[j] = d1 * ga_[j] + phi2 * zt_[l - 1][j] * gat_[j];
        gzt_[j] = d1 * gat_[j];
      }
    }
  }
  return sq;
}

std::vector<double> full_gate(const LayerLayout& layout, const Mask& mask) {
  if (mask.weight_count() != layout.n_weights) {
    throw std::invalid_argument("mask does not match parameter layout");
  }
  std::vector<double> gate(layout.n_params, 1.0);
  for (std::int64_t i = 0; i < layout.n_weights; ++i) {
    gate[i] = mask.bits[i] != 0 ? 1.0 : 0.0;
  }
  return gate;
}

std::vector<double> effective_values(const ParamState& params, const Mask& mask,
                                     const kernels::KernelTable& kt) {
  if (!mask.matches(params.spec)) {
    throw std::invalid_argument("mask does not match network spec");
  }
  const std::int64_t n_w = params.layout.n_weights;
  std::vector<double> flat = params.values;
  std::vector<double> gate(n_w);
  for (std::int64_t i = 0; i < n_w; ++i) {
    gate[i] = mask.bits[i] != 0 ? 1.0 : 0.0;
  }
  kt.apply_mask(flat.data(), gate.data(), static_cast<int>(n_w));
  return flat;
}

}  // namespace imprg::nn_core::detail
