// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "saga/backend.hpp"
#include "saga/prior.hpp"
#include "saga/sampler.hpp"
#include "saga/schedule.hpp"

namespace saga {

/// Full experiment description, strict-parsed from JSON (schema 1). Unknown
/// keys anywhere are rejected with the offending key in the message.
struct ExperimentConfig {
  // schedule block
  std::string schedule_kind = "vp";  // vp | flow
  std::string grid;                  // empty: kind default (ddpm50 / flow28)
  int t_max = 1000;
  double beta_start = 1e-4, beta_end = 0.02;

  // backend block
  std::string backend_kind = "analytic";  // analytic | learned
  std::string library_path;               // load the scene library instead of building it
  std::string weights_path;               // learned backend weights
  int vocab_size = 8, channels = 4, height = 16, width = 16;
  double blob_sigma = 1.5;
  int k_per_prompt = 3;
  uint64_t dataset_seed = 1;

  // method block
  std::string method = "vanilla";
  int t_star_index = -1, cutoff_index = -1;
  double guidance_lr = 20.0;
  double cfg_scale = 1.0;
  std::string cov_kind = "fixed";  // fixed | scalar | diag | block
  int cov_block = 0;
  bool cov_per_channel = false, cov_frozen = false;
  int samples = 1;  // draws per seed for unique-distribution methods

  // optim block (negative sentinel: use schedule-family default)
  int optim_steps = -1;
  double optim_lr = -1.0, optim_momentum = -1.0;
  int optim_batch = -1;
  bool optim_rescale = true;

  std::vector<PromptSpec> prompts;
  std::vector<uint64_t> seeds;
  std::string output_dir = "out";

  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string to_json() const;  // canonical form, drives the config hash
  uint64_t hash() const;

  void validate() const;
  Schedule make_schedule() const;
  PrototypeLibrary make_library() const;
  std::unique_ptr<Backend> make_backend(const PrototypeLibrary& lib) const;
  PipelineConfig pipeline() const;
  OptimConfig optim() const;
};

uint64_t fnv1a64(const std::string& text);

/// Apply `key=value` overrides to a config JSON document before parsing;
/// keys use dotted paths ("method.guidance_lr=0").
std::string apply_overrides(const std::string& json_text, const std::vector<std::string>& overrides);

struct RunResult {
  int cells = 0;
  int records = 0;
  std::string records_path;
};

/// Execute every (prompt, seed) cell on a worker pool (capped by
/// SAGA_LAB_THREADS) and write records.jsonl, library.json, and metadata.json
/// under the output directory. Record bytes are independent of worker count
/// and timing.
RunResult run_experiment(const ExperimentConfig& cfg);

struct SweepAxis {
  std::string key;
  std::vector<double> values;
};

/// Parse "key=lo:hi:step" (inclusive endpoints within fp tolerance) or
/// "key=lo:hi" (integer step 1).
SweepAxis parse_sweep_axis(const std::string& spec);

struct SweepResult {
  int total_cells = 0;
  int executed = 0;
  int skipped = 0;  // already present in the sweep log
  std::string summary_path;
};

/// Cartesian product over the axes; each cell runs the full experiment with
/// the overridden parameters and appends one summary row (keyed by config
/// hash, so interrupted sweeps resume at the missing cells).
SweepResult run_sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes);

/// Aggregate a run directory's records.jsonl into summary.csv: one row per
/// method x entity count with tiam, box-alignment, diversity, saturation.
std::string write_report(const std::string& run_dir);

/// First 3 channels to RGB, affine [-3 sigma_ref, 3 sigma_ref] -> [0, 255],
/// binary PPM (P6). Throws on unwritable paths and on latents with fewer
/// than 3 channels.
void emit_image(const Tensor& z0, double sigma_ref, const std::string& path);

int worker_count(int cells);

}  // namespace saga
