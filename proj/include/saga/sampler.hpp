// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saga/backend.hpp"
#include "saga/criterion.hpp"
#include "saga/prior.hpp"
#include "saga/rng.hpp"
#include "saga/schedule.hpp"

namespace saga {

enum class Method {
  Vanilla,
  Gsn,
  Saga,
  SagaUni,
  SagaSigma,
  SagaUniSigma,
  SagaPlus,
  SagaSigmaPlus,
  SagaBbox,
  SagaPlusBbox,
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);
bool method_learns_prior(Method m);
bool method_uses_guidance(Method m);
bool method_learns_cov(Method m);
bool method_uses_boxes(Method m);

struct PipelineConfig {
  Method method = Method::Vanilla;
  int t_star_index = -1;   // -1: schedule default (vp: 10, flow: 5)
  int cutoff_index = -1;   // -1: half the grid
  double guidance_lr = 20.0;
  double cfg_scale = 1.0;  // 1 disables blending entirely
  CovParam cov;            // sigma variants override the kind

  int resolve_t_star(const Schedule& schedule) const;
  int resolve_cutoff(const Schedule& schedule) const;
  void validate(const Schedule& schedule) const;
};

struct PriorSummary {
  bool present = false;
  double t_star = 0.0;
  double mu_std = 0.0;
  double sigma_ref = 0.0;
  double final_loss = 0.0;
};

struct GenerationRecord {
  std::string prompt_id;
  uint64_t seed = 0;
  std::string method;
  Tensor z0;
  double t_star = 0.0;
  PriorSummary prior;
  std::vector<double> guidance_trace;  // criterion value at each guided step
  std::vector<double> prior_loss_trace;
  int solver_calls = 0;
  double wall_seconds = 0.0;

  std::string to_json() const;
  static GenerationRecord from_json(const std::string& text);
};

GenerationRecord generate_vanilla(const PromptSpec& prompt, const Schedule& schedule,
                                  const Backend& backend, const PipelineConfig& config,
                                  uint64_t seed);

GenerationRecord generate_gsn(const PromptSpec& prompt, const Schedule& schedule,
                              const Backend& backend, const CriterionConfig& criterion,
                              const PipelineConfig& config, uint64_t seed);

GenerationRecord generate_saga(const PromptSpec& prompt, const Schedule& schedule,
                               const Backend& backend, const CriterionConfig& criterion,
                               const OptimConfig& optim, const PipelineConfig& config,
                               uint64_t seed);

/// One chain to t*, one learned prior, n draws each denoised independently.
/// All records share the prior summary.
std::vector<GenerationRecord> generate_saga_uni(const PromptSpec& prompt, const Schedule& schedule,
                                                const Backend& backend,
                                                const CriterionConfig& criterion,
                                                const OptimConfig& optim,
                                                const PipelineConfig& config, int n, uint64_t seed);

GenerationRecord generate_saga_plus(const PromptSpec& prompt, const Schedule& schedule,
                                    const Backend& backend, const CriterionConfig& criterion,
                                    const OptimConfig& optim, const PipelineConfig& config,
                                    uint64_t seed);

/// Dispatch on config.method; builds the criterion from the prompt (bbox
/// variants take the prompt's boxes). Unique-distribution methods emit n
/// records; the rest emit one record per call.
std::vector<GenerationRecord> generate(const PromptSpec& prompt, const Schedule& schedule,
                                       const Backend& backend, const OptimConfig& optim,
                                       const PipelineConfig& config, int n, uint64_t seed);

}  // namespace saga
