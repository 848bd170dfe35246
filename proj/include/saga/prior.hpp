// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "saga/backend.hpp"
#include "saga/criterion.hpp"
#include "saga/schedule.hpp"
#include "saga/tensor.hpp"

namespace saga {

enum class CovKind { Fixed, Scalar, Diag, Block };

struct CovParam {
  CovKind kind = CovKind::Fixed;
  int block = 0;             // block size, Block only
  bool per_channel = false;  // one parameter set per latent channel
  bool frozen = false;       // keep values at init (reduction to mean-only learning)

  bool learnable() const { return kind != CovKind::Fixed && !frozen; }
};

/// The learnable prompt-conditioned Gaussian q(z_t | y): mean mu and a
/// structured Cholesky factor over the spatial grid.
struct GaussianPrior {
  double t_star = 0.0;
  ScheduleKind schedule_kind = ScheduleKind::VpDiffusion;
  Tensor mu;        // C x H x W
  CovParam cov;
  Tensor chol;      // structure-dependent storage, diagonal clamped at 1e-4
  double sigma_ref = 0.0;

  int64_t chol_param_count() const;
};

struct OptimConfig {
  int steps = 50;
  double lr = 20.0;
  double momentum = 0.4;
  int batch = 10;
  bool rescale = true;
};

/// Paper defaults per backbone family: vp uses momentum 0.4 / batch 10,
/// flow momentum 0.7 / batch 4.
OptimConfig default_optim(ScheduleKind kind);

/// DC-component initialization: mu is the per-channel spatial mean of
/// z0_hat(z_t, y, t_star), sigma_ref its elementwise standard deviation.
GaussianPrior init_prior(const Tensor& z_t, const Backend& backend, const PromptSpec& prompt,
                         const Schedule& schedule, double t_star, CovParam cov = CovParam{});

/// Clamp std(mu) to sigma_ref by uniform shrinking; direction preserved.
Tensor rescale_mu(const Tensor& mu, double sigma_ref);

double tensor_std(const Tensor& t);

/// Apply the structured factor to a standard normal draw (value level).
Tensor apply_chol(const GaussianPrior& prior, const Tensor& eps, double b_tstar);
/// Tape version, differentiable w.r.t. the chol parameter leaf.
Var apply_chol(Tape& tape, const GaussianPrior& prior, Var chol_param, const Tensor& eps);

struct LearnResult {
  GaussianPrior prior;
  std::vector<double> loss_trace;    // mean batch loss per step
  std::vector<double> mu_std_trace;  // std(mu) after each step's update+rescale
};

/// Momentum-SGD over mu (and the Cholesky parameters when learnable):
/// each step draws `batch` latents z = a mu + L eps, averages the criterion
/// gradient, updates heavy-ball style, then rescales mu.
LearnResult learn_prior(GaussianPrior prior, const Backend& backend, const CriterionConfig& criterion,
                        const Schedule& schedule, const PromptSpec& prompt, const OptimConfig& config,
                        std::mt19937_64& rng);

/// As learn_prior but with a caller-supplied loss: maps the sampled z_t var
/// to a scalar var. Used by convergence oracles and tests.
using LatentLoss = std::function<Var(Tape&, Var z_t)>;
LearnResult learn_prior_with_loss(GaussianPrior prior, const LatentLoss& loss, const Schedule& schedule,
                                  const OptimConfig& config, std::mt19937_64& rng);

std::vector<Tensor> sample_prior(const GaussianPrior& prior, const Schedule& schedule,
                                 std::mt19937_64& rng, int n);

/// Mean criterion value over n fresh draws from the prior (Monte Carlo).
double expected_criterion(const GaussianPrior& prior, const Backend& backend,
                          const CriterionConfig& criterion, const Schedule& schedule,
                          const PromptSpec& prompt, std::mt19937_64& rng, int n);

}  // namespace saga
