// SPDX-License-Identifier: Apache-2.0
#include "saga/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace saga {

namespace {

// Flow-matching sampling grid used at 28 steps (shifted SD 3 schedule),
// stored verbatim.
const std::vector<double> kFlow28 = {
    1000.0,   987.3806, 974.1077, 960.1293, 945.3875, 929.8179, 913.3489,
    895.9003, 877.3818, 857.6923, 836.7166, 814.3247, 790.3682, 764.6771,
    737.0558, 707.2785, 675.0823, 640.1602, 602.1505, 560.625,  515.0720,
    464.8760, 409.2888, 347.3926, 278.0487, 199.8269, 110.9057, 8.9285};

std::vector<double> ddpm50_grid() {
  std::vector<double> g;
  for (int t = 981; t >= 1; t -= 20) g.push_back(static_cast<double>(t));
  return g;
}

void validate_grid(const std::vector<double>& grid, int t_max) {
  if (grid.empty()) throw std::invalid_argument("sampling grid is empty");
  for (size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0 || grid[i] > t_max) throw std::invalid_argument("grid value out of [0, t_max]");
    if (i > 0 && grid[i] >= grid[i - 1]) throw std::invalid_argument("sampling grid must be strictly decreasing");
  }
}

}  // namespace

std::vector<double> make_grid(const std::string& name, ScheduleKind kind, int t_max) {
  if (name == "ddpm50") {
    if (kind != ScheduleKind::VpDiffusion) throw std::invalid_argument("grid ddpm50 requires a vp schedule");
    return ddpm50_grid();
  }
  if (name == "flow28") {
    if (kind != ScheduleKind::LinearFlow) throw std::invalid_argument("grid flow28 requires a flow schedule");
    return kFlow28;
  }
  if (name.rfind("uniform:", 0) == 0) {
    int n = std::stoi(name.substr(8));
    if (n < 1) throw std::invalid_argument("uniform:<n> requires n >= 1");
    std::vector<double> g;
    for (int i = 0; i < n; ++i) {
      double t = static_cast<double>(t_max) * static_cast<double>(n - i) / static_cast<double>(n);
      if (kind == ScheduleKind::VpDiffusion) t = std::max(1.0, std::round(t));
      g.push_back(t);
    }
    for (size_t i = 1; i < g.size(); ++i) {
      if (g[i] >= g[i - 1]) throw std::invalid_argument("uniform grid too fine for t_max");
    }
    return g;
  }
  throw std::invalid_argument("unknown grid preset: " + name);
}

Schedule Schedule::vp(int t_max, double beta_start, double beta_end, std::vector<double> grid) {
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("vp schedule requires 0 < beta_start <= beta_end < 1");
  }
  if (t_max < 1) throw std::invalid_argument("t_max must be positive");
  validate_grid(grid, t_max);
  Schedule s;
  s.kind_ = ScheduleKind::VpDiffusion;
  s.t_max_ = t_max;
  s.grid_ = std::move(grid);
  s.abar_.resize(static_cast<size_t>(t_max) + 1);
  s.abar_[0] = 1.0;  // convention: empty product
  for (int t = 1; t <= t_max; ++t) {
    double beta = t_max == 1 ? beta_start
                             : beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) /
                                                static_cast<double>(t_max - 1);
    s.abar_[static_cast<size_t>(t)] = s.abar_[static_cast<size_t>(t - 1)] * (1.0 - beta);
  }
  return s;
}

Schedule Schedule::flow(int t_max, std::vector<double> grid) {
  if (t_max < 1) throw std::invalid_argument("t_max must be positive");
  validate_grid(grid, t_max);
  Schedule s;
  s.kind_ = ScheduleKind::LinearFlow;
  s.t_max_ = t_max;
  s.grid_ = std::move(grid);
  return s;
}

double Schedule::a(double t) const {
  if (kind_ == ScheduleKind::LinearFlow) return 1.0 - t / static_cast<double>(t_max_);
  auto idx = static_cast<size_t>(std::llround(t));
  return std::sqrt(abar_.at(idx));
}

double Schedule::b(double t) const {
  if (kind_ == ScheduleKind::LinearFlow) return t / static_cast<double>(t_max_);
  auto idx = static_cast<size_t>(std::llround(t));
  return std::sqrt(1.0 - abar_.at(idx));
}

double Schedule::step_target(int i) const {
  if (i < 0 || i >= num_solver_steps()) throw std::out_of_range("step index out of range");
  return i + 1 < static_cast<int>(grid_.size()) ? grid_[static_cast<size_t>(i) + 1] : 0.0;
}

Tensor Schedule::diffuse(const Tensor& z0, double t, const Tensor& eps) const {
  if (!z0.same_shape(eps)) {
    throw std::invalid_argument("diffuse: z0 shape " + shape_str(z0.shape()) + " vs eps shape " +
                                shape_str(eps.shape()));
  }
  return t_add(t_scale(z0, a(t)), t_scale(eps, b(t)));
}

Tensor Schedule::solver_step(const Tensor& z_t, const Tensor& prediction, double t, double t_next,
                             std::mt19937_64& rng) const {
  if (t_next >= t) throw std::invalid_argument("solver_step: t_next must be < t");
  if (kind_ == ScheduleKind::LinearFlow) {
    double ds = (t_next - t) / static_cast<double>(t_max_);
    return t_add(z_t, t_scale(prediction, ds));
  }
  double abar_t = a(t) * a(t);
  double abar_n = a(t_next) * a(t_next);
  double alpha_eff = abar_t / abar_n;
  double beta_eff = 1.0 - alpha_eff;
  Tensor z0_hat = estimate_z0(z_t, prediction, t);
  double c0 = std::sqrt(abar_n) * beta_eff / (1.0 - abar_t);
  double ct = std::sqrt(alpha_eff) * (1.0 - abar_n) / (1.0 - abar_t);
  Tensor mean = t_add(t_scale(z0_hat, c0), t_scale(z_t, ct));
  if (t_next <= 0.0) return mean;
  double var = beta_eff * (1.0 - abar_n) / (1.0 - abar_t);
  double sd = std::sqrt(std::max(0.0, var));
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out = mean;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += sd * normal(rng);
  return out;
}

Tensor Schedule::estimate_z0(const Tensor& z_t, const Tensor& prediction, double t) const {
  double at = a(t), bt = b(t);
  if (kind_ == ScheduleKind::VpDiffusion) {
    if (at == 0.0) throw std::domain_error("estimate_z0: a_t = 0, estimator singular");
    return t_scale(t_sub(z_t, t_scale(prediction, bt)), 1.0 / at);
  }
  if (at + bt == 0.0) throw std::domain_error("estimate_z0: a_t + b_t = 0, estimator singular");
  return t_scale(t_sub(z_t, t_scale(prediction, bt)), 1.0 / (at + bt));
}

Var Schedule::estimate_z0(Tape& tape, Var z_t, Var prediction, double t) const {
  double at = a(t), bt = b(t);
  double denom = kind_ == ScheduleKind::VpDiffusion ? at : at + bt;
  if (denom == 0.0) throw std::domain_error("estimate_z0: singular estimator");
  return tape.scale(tape.sub(z_t, tape.scale(prediction, bt)), 1.0 / denom);
}

Schedule make_vp_schedule(int t_max, double beta_start, double beta_end, const std::string& grid) {
  return Schedule::vp(t_max, beta_start, beta_end, make_grid(grid, ScheduleKind::VpDiffusion, t_max));
}

Schedule make_flow_schedule(int t_max, const std::string& grid) {
  return Schedule::flow(t_max, make_grid(grid, ScheduleKind::LinearFlow, t_max));
}

}  // namespace saga
