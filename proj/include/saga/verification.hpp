// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "saga/schedule.hpp"

namespace saga {

/// Gaussian mixture in 1 or 2 dimensions: the exactly-solvable stand-in for
/// p(z0 | y). Covariances are per-component, row-major d x d.
struct MixtureSpec {
  int dim = 1;
  std::string id;
  std::vector<double> weights;
  std::vector<std::vector<double>> means;  // d entries per component
  std::vector<std::vector<double>> covs;   // d*d entries per component

  size_t size() const { return weights.size(); }
  void validate() const;

  static MixtureSpec gaussian1d(double mean, double var);
  static MixtureSpec asymmetric1d();  // bundled test mixture, nonzero skew
  static MixtureSpec symmetric1d();   // mirror pair, zero odd cumulants
};

using Density1D = std::function<double(double)>;
using Density2D = std::function<double(double, double)>;

/// Exact density of z_t = a z0 + b eps: the mixture with component moments
/// (a mu_k, a^2 Sigma_k + b^2 I).
Density1D exact_marginal(const MixtureSpec& mix, const Schedule& schedule, double t);
Density2D exact_marginal_2d(const MixtureSpec& mix, const Schedule& schedule, double t);

/// Single-Gaussian approximation N(a mu_y, a^2 Sigma_y + b^2 I) built from
/// the mixture's overall mean and (co)variance.
Density1D gaussian_approx(const MixtureSpec& mix, const Schedule& schedule, double t);
Density2D gaussian_approx_2d(const MixtureSpec& mix, const Schedule& schedule, double t);

double mixture_mean(const MixtureSpec& mix);      // d = 1
double mixture_variance(const MixtureSpec& mix);  // d = 1

enum class ErrorMetric { TotalVariation, KlDivergence };

/// Distance between the exact marginal and its Gaussian approximation.
/// d = 1: adaptive quadrature, absolute tolerance 1e-10, window +-10 std.
/// d = 2: 256 x 256 grid sum. Throws if the quadrature fails to converge.
double approx_error(const MixtureSpec& mix, const Schedule& schedule, double t,
                    ErrorMetric metric = ErrorMetric::TotalVariation);

/// Invert a(t) by bisection (a is monotone decreasing on [0, t_max]).
double t_for_a(const Schedule& schedule, double a);

struct SlopeFit {
  bool exact = false;  // all errors below noise floor, slope undefined
  double slope = 0.0;
  double residual = 0.0;  // rms residual of the log-log fit
};

/// Least-squares slope of log(approx_error) against log(a) over the given
/// signal levels. Values should sit in the asymptotic window a <= 0.2.
SlopeFit fit_decay_slope(const MixtureSpec& mix, const Schedule& schedule,
                         const std::vector<double>& a_values);

/// k-th cumulant (k in 1..4) of the clean 1-D mixture and of its noised
/// marginal at time t, via raw moments.
double mixture_cumulant(const MixtureSpec& mix, int k);
double noised_cumulant(const MixtureSpec& mix, const Schedule& schedule, double t, int k);

struct CumulantCheck {
  bool defined = false;  // false when the clean cumulant vanishes
  double ratio = 0.0;    // kappa_k(z_t) / (a^k kappa_k(z0))
};

CumulantCheck cumulant_scaling_check(const MixtureSpec& mix, const Schedule& schedule, double t,
                                     int k);
/// Monte Carlo version: sample cumulants from n draws of z_t.
CumulantCheck cumulant_scaling_mc(const MixtureSpec& mix, const Schedule& schedule, double t, int k,
                                  int64_t n, std::mt19937_64& rng);

}  // namespace saga
