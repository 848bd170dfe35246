// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "saga/tensor.hpp"

namespace saga {

enum class ScheduleKind { VpDiffusion, LinearFlow };

/// Prediction target of a backend: epsilon for VP diffusion, velocity for
/// linear flow.
enum class PredictionKind { Epsilon, Velocity };

/// The unified forward process z_t = a_t z0 + b_t eps. VP diffusion derives
/// (a, b) from a beta array; linear flow uses the closed form a = 1 - t/T.
/// Immutable after construction.
class Schedule {
 public:
  static Schedule vp(int t_max, double beta_start, double beta_end, std::vector<double> grid);
  static Schedule flow(int t_max, std::vector<double> grid);

  ScheduleKind kind() const { return kind_; }
  PredictionKind prediction_kind() const {
    return kind_ == ScheduleKind::VpDiffusion ? PredictionKind::Epsilon : PredictionKind::Velocity;
  }
  int t_max() const { return t_max_; }
  double a(double t) const;
  double b(double t) const;
  const std::vector<double>& grid() const { return grid_; }
  /// Solver steps a full chain consumes: between-grid steps plus the final
  /// step to t = 0.
  int num_solver_steps() const { return static_cast<int>(grid_.size()); }
  /// Target time of solver call `i` (i in [0, num_solver_steps)): the next
  /// grid value, or 0 for the last call.
  double step_target(int i) const;

  Tensor diffuse(const Tensor& z0, double t, const Tensor& eps) const;
  /// One reverse solver step from (z_t, t) to t_next given the backend
  /// prediction at (z_t, t). VP: DDPM ancestral step (no injected noise when
  /// t_next == 0). Flow: Euler step in normalized time.
  Tensor solver_step(const Tensor& z_t, const Tensor& prediction, double t, double t_next,
                     std::mt19937_64& rng) const;
  Tensor estimate_z0(const Tensor& z_t, const Tensor& prediction, double t) const;
  /// Tape version of estimate_z0, differentiable through z_t and prediction.
  Var estimate_z0(Tape& tape, Var z_t, Var prediction, double t) const;

 private:
  Schedule() = default;

  ScheduleKind kind_ = ScheduleKind::VpDiffusion;
  int t_max_ = 0;
  std::vector<double> abar_;  // VP only: cumulative prod of (1 - beta), abar_[t]
  std::vector<double> grid_;
};

/// Grid presets: "ddpm50", "flow28", "uniform:<n>". Throws on unknown names
/// and on presets that do not match the schedule kind.
std::vector<double> make_grid(const std::string& name, ScheduleKind kind, int t_max);

Schedule make_vp_schedule(int t_max = 1000, double beta_start = 1e-4, double beta_end = 0.02,
                          const std::string& grid = "ddpm50");
Schedule make_flow_schedule(int t_max = 1000, const std::string& grid = "flow28");

}  // namespace saga
