#include "imprg/hnn_tasks.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace imprg::hnn_tasks {

TaskId parse_task(const std::string& name) {
  if (name == "nl" || name == "nl_oscillator") return TaskId::kNlOscillator;
  if (name == "hh" || name == "henon_heiles") return TaskId::kHenonHeiles;
  throw std::invalid_argument("unknown task: " + name);
}

const char* task_name(TaskId id) {
  return id == TaskId::kNlOscillator ? "nl_oscillator" : "henon_heiles";
}

int task_arity(TaskId id) { return id == TaskId::kNlOscillator ? 2 : 4; }

TimeGrid make_time_grid(double t0, double t_max, int k) {
  if (k < 2) throw std::invalid_argument("time grid needs at least 2 points");
  if (!(t_max > t0)) throw std::invalid_argument("time grid needs t_max > t0");
  TimeGrid grid;
  grid.points.resize(k);
  const double step = (t_max - t0) / (k - 1);
  for (int i = 0; i < k; ++i) {
    grid.points[i] = t0 + step * i;
  }
  grid.points.back() = t_max;
  return grid;
}

void TaskBinding::validate() const {
  if (!(t_max > t0)) throw std::invalid_argument("task domain needs t_max > t0");
}

TaskBinding make_nl_task() {
  TaskBinding b;
  b.task = TaskId::kNlOscillator;
  b.initial_conditions = {1.0, 0.0, 0.0, 0.0};
  b.t0 = 0.0;
  b.t_max = 4.0 * std::numbers::pi;
  return b;
}

TaskBinding make_hh_task() {
  TaskBinding b;
  b.task = TaskId::kHenonHeiles;
  b.initial_conditions = {0.3, -0.3, 0.3, 0.15};
  b.t0 = 0.0;
  b.t_max = 6.0;
  return b;
}

double nl_hamiltonian(double x, double p) {
  return 0.5 * p * p + 0.5 * x * x + 0.25 * x * x * x * x;
}

std::array<double, 2> nl_equations_of_motion(double x, double p) {
  return {p, -(x + x * x * x)};
}

double hh_hamiltonian(double x, double y, double px, double py) {
  return 0.5 * (px * px + py * py) + 0.5 * (x * x + y * y) + x * x * y -
         y * y * y / 3.0;
}

std::array<double, 4> hh_equations_of_motion(double x, double y, double px,
                                             double py) {
  return {px, py, -(x + 2.0 * x * y), -(y + x * x - y * y)};
}

double point_sq_residual(TaskId id, const double* s, const double* sd) {
  if (id == TaskId::kNlOscillator) {
    const double r1 = sd[0] - s[1];
    const double r2 = sd[1] + s[0] + s[0] * s[0] * s[0];
    return r1 * r1 + r2 * r2;
  }
  const double x = s[0];
  const double y = s[1];
  const double r1 = sd[0] - s[2];
  const double r2 = sd[1] - s[3];
  const double r3 = sd[2] + x + 2.0 * x * y;
  const double r4 = sd[3] + y + x * x - y * y;
  return r1 * r1 + r2 * r2 + r3 * r3 + r4 * r4;
}

double nl_loss(const std::vector<std::array<double, 2>>& states,
               const std::vector<std::array<double, 2>>& state_dots) {
  if (states.empty() || states.size() != state_dots.size()) {
    throw std::invalid_argument("nl_loss needs matching non-empty batches");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    sum += point_sq_residual(TaskId::kNlOscillator, states[i].data(),
                             state_dots[i].data());
  }
  return sum / static_cast<double>(states.size());
}

double hh_loss(const std::vector<std::array<double, 4>>& states,
               const std::vector<std::array<double, 4>>& state_dots) {
  if (states.empty() || states.size() != state_dots.size()) {
    throw std::invalid_argument("hh_loss needs matching non-empty batches");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    sum += point_sq_residual(TaskId::kHenonHeiles, states[i].data(),
                             state_dots[i].data());
  }
  return sum / static_cast<double>(states.size());
}

namespace {

// Loss seeds on the task state: g_s = d(sq residual)/d(state),
// g_sd = d(sq residual)/d(state_dot).
double state_seeds(TaskId id, const double* s, const double* sd, double* g_s,
                   double* g_sd) {
  if (id == TaskId::kNlOscillator) {
    const double r1 = sd[0] - s[1];
    const double r2 = sd[1] + s[0] + s[0] * s[0] * s[0];
    g_s[0] = 2.0 * r2 * (1.0 + 3.0 * s[0] * s[0]);
    g_s[1] = -2.0 * r1;
    g_sd[0] = 2.0 * r1;
    g_sd[1] = 2.0 * r2;
    return r1 * r1 + r2 * r2;
  }
  const double x = s[0];
  const double y = s[1];
  const double r1 = sd[0] - s[2];
  const double r2 = sd[1] - s[3];
  const double r3 = sd[2] + x + 2.0 * x * y;
  const double r4 = sd[3] + y + x * x - y * y;
  g_s[0] = 2.0 * r3 * (1.0 + 2.0 * y) + 2.0 * r4 * (2.0 * x);
  g_s[1] = 2.0 * r3 * (2.0 * x) + 2.0 * r4 * (1.0 - 2.0 * y);
  g_s[2] = -2.0 * r1;
  g_s[3] = -2.0 * r2;
  g_sd[0] = 2.0 * r1;
  g_sd[1] = 2.0 * r2;
  g_sd[2] = 2.0 * r3;
  g_sd[3] = 2.0 * r4;
  return r1 * r1 + r2 * r2 + r3 * r3 + r4 * r4;
}

}  // namespace

void task_state(const TaskBinding& task, double t, const double* raw,
                const double* raw_dot, double* state, double* state_dot) {
  const int n = task.arity();
  if (!task.ic_constraint) {
    for (int j = 0; j < n; ++j) {
      state[j] = raw[j];
      state_dot[j] = raw_dot[j];
    }
    return;
  }
  const double e = std::exp(-(t - task.t0));
  const double f = 1.0 - e;
  for (int j = 0; j < n; ++j) {
    state[j] = task.initial_conditions[j] + f * raw[j];
    state_dot[j] = e * raw[j] + f * raw_dot[j];
  }
}

double residual_seeds(const TaskBinding& task, double t, const double* raw,
                      const double* raw_dot, double* g_raw, double* g_raw_dot) {
  const int n = task.arity();
  double s[4];
  double sd[4];
  double gs[4];
  double gsd[4];
  task_state(task, t, raw, raw_dot, s, sd);
  const double sq = state_seeds(task.task, s, sd, gs, gsd);
  if (!task.ic_constraint) {
    for (int j = 0; j < n; ++j) {
      g_raw[j] = gs[j];
      g_raw_dot[j] = gsd[j];
    }
    return sq;
  }
  const double e = std::exp(-(t - task.t0));
  const double f = 1.0 - e;
  for (int j = 0; j < n; ++j) {
    g_raw[j] = gs[j] * f + gsd[j] * e;
    g_raw_dot[j] = gsd[j] * f;
  }
  return sq;
}

double energy_drift(const nn_core::ParamState& params, const nn_core::Mask& mask,
                    const TaskBinding& task, const TimeGrid& grid) {
  if (grid.points.empty()) {
    throw std::invalid_argument("energy_drift needs a non-empty grid");
  }
  if (params.spec.output_dim != task.arity()) {
    throw std::invalid_argument("network output dim does not match task arity");
  }
  std::vector<double> raw;
  std::vector<double> raw_dot;
  double s[4];
  double sd[4];
  double h0 = 0.0;
  double drift = 0.0;
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    const double t = grid.points[i];
    nn_core::forward_with_time_derivative(params, mask, t, raw, raw_dot);
    task_state(task, t, raw.data(), raw_dot.data(), s, sd);
    const double h = task.task == TaskId::kNlOscillator
                         ? nl_hamiltonian(s[0], s[1])
                         : hh_hamiltonian(s[0], s[1], s[2], s[3]);
    if (i == 0) {
      h0 = h;
    } else {
      drift = std::max(drift, std::fabs(h - h0));
    }
  }
  return drift;
}

}  // namespace imprg::hnn_tasks
