#pragma once

#include <array>
#include <string>
#include <vector>

#include "imprg/nn_core.hpp"

namespace imprg::hnn_tasks {

enum class TaskId { kNlOscillator, kHenonHeiles };

TaskId parse_task(const std::string& name);
const char* task_name(TaskId id);

// State arity: (x, p) for the oscillator, (x, y, px, py) for Henon-Heiles.
int task_arity(TaskId id);

struct TimeGrid {
  std::vector<double> points;  // strictly increasing
};

// K equispaced points spanning [t0, t_max] inclusive. K >= 2.
TimeGrid make_time_grid(double t0, double t_max, int k);

// A task bound to its time domain and reference initial conditions. When
// ic_constraint is set, raw network outputs N are reshaped into states via
//   s(t) = ic + (1 - exp(-(t - t0))) * N(t)
// pinning s(t0) = ic; otherwise raw outputs are the states.
struct TaskBinding {
  TaskId task = TaskId::kNlOscillator;
  std::array<double, 4> initial_conditions{};
  double t0 = 0.0;
  double t_max = 1.0;
  bool ic_constraint = false;

  int arity() const { return task_arity(task); }
  void validate() const;
};

TaskBinding make_nl_task();
TaskBinding make_hh_task();

// H = p^2/2 + x^2/2 + x^4/4
double nl_hamiltonian(double x, double p);
// (dx/dt, dp/dt) = (p, -(x + x^3))
std::array<double, 2> nl_equations_of_motion(double x, double p);

// H = (px^2 + py^2)/2 + (x^2 + y^2)/2 + x^2 y - y^3/3
double hh_hamiltonian(double x, double y, double px, double py);
// (dx/dt, dy/dt, dpx/dt, dpy/dt)
std::array<double, 4> hh_equations_of_motion(double x, double y, double px,
                                             double py);

// Squared residual sum of Hamilton's equations at one point; state and
// state_dot have the task arity.
double point_sq_residual(TaskId id, const double* state,
                         const double* state_dot);

// Mean of point_sq_residual over per-point states: the training loss.
// states/state_dots are row-major K x arity.
double nl_loss(const std::vector<std::array<double, 2>>& states,
               const std::vector<std::array<double, 2>>& state_dots);
double hh_loss(const std::vector<std::array<double, 4>>& states,
               const std::vector<std::array<double, 4>>& state_dots);

// Residual value and loss seeds for one collocation point, expressed on the
// raw network outputs (the ic-constraint chain rule is applied inside).
// raw/raw_dot/g_raw/g_raw_dot have the task arity; g_* are overwritten.
double residual_seeds(const TaskBinding& task, double t, const double* raw,
                      const double* raw_dot, double* g_raw, double* g_raw_dot);

// Task state at time t: raw network outputs passed through the binding's
// output transform. state/state_dot have the task arity.
void task_state(const TaskBinding& task, double t, const double* raw,
                const double* raw_dot, double* state, double* state_dot);

// max_t |H(state(t)) - H(state(t0))| over the grid, evaluated on the model.
double energy_drift(const nn_core::ParamState& params, const nn_core::Mask& mask,
                    const TaskBinding& task, const TimeGrid& grid);

}  // namespace imprg::hnn_tasks
