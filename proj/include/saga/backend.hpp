// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "saga/schedule.hpp"
#include "saga/tensor.hpp"

namespace saga {

/// Axis-aligned box [x1, y1, x2, y2] in attention-grid coordinates
/// (x = column, y = row), half-open on the right/bottom.
using Box = std::array<int, 4>;

struct PromptSpec {
  std::string id;
  std::vector<int> entities;          // ordered token ids, distinct
  std::vector<Box> boxes;             // empty, or one per entity
  void validate(int vocab_size, int height, int width) const;
};

enum class LatentRole { Clean, Noised, Estimate };

struct SceneLatent {
  Tensor value;  // C x H x W
  LatentRole role = LatentRole::Clean;
};

enum class AttentionStage { Raw, Preprocessed };

struct AttentionMaps {
  AttentionStage stage = AttentionStage::Raw;
  std::vector<int> entities;  // subject token ids, parallel to maps
  std::vector<Var> maps;      // each h x w, on the tape
};

struct BackendOutput {
  Var prediction;       // epsilon or velocity, latent-shaped
  Var z0_hat;           // internal clean estimate
  AttentionMaps raw_maps;
};

/// Library of prototype clean scenes realizing p(z0 | y): per prompt, K
/// latents with one Gaussian intensity blob per entity, each entity carrying
/// a fixed channel signature.
struct PrototypeLibrary {
  int vocab_size = 8;
  int channels = 4, height = 16, width = 16;
  double blob_sigma = 1.5;
  std::vector<Tensor> templates;  // per entity id: C-vector channel signature

  struct PromptEntry {
    PromptSpec prompt;
    std::vector<Tensor> prototypes;        // K clean latents
    std::vector<std::vector<std::pair<double, double>>> centers;  // per proto, per entity (row, col)
    std::vector<double> weights;           // prior pi_k, sums to 1
  };
  std::map<std::string, PromptEntry> prompts;

  const PromptEntry& entry(const std::string& prompt_id) const;
  /// Union of all prompts' prototypes with reweighted priors.
  std::vector<std::pair<const Tensor*, double>> unconditional() const;

  std::string to_json() const;
  static PrototypeLibrary from_json(const std::string& text);
};

PrototypeLibrary build_scene_dataset(int vocab_size, int channels, int height, int width,
                                     double blob_sigma, const std::vector<PromptSpec>& prompts,
                                     int k_per_prompt, std::mt19937_64& rng);

/// Fixed channel signatures: signed rows of a 4x4 Hadamard basis, unit norm.
std::vector<Tensor> make_entity_templates(int vocab_size, int channels);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendOutput predict(Tape& tape, Var z_t, const PromptSpec& prompt,
                                const Schedule& schedule, double t) const = 0;
  /// Unconditional prediction (for classifier-free blending).
  virtual Var predict_uncond(Tape& tape, Var z_t, const Schedule& schedule, double t) const = 0;
};

/// Exact posterior-mean backend over the prototype mixture. Differentiable
/// w.r.t. z_t.
class AnalyticBackend : public Backend {
 public:
  explicit AnalyticBackend(PrototypeLibrary library) : lib_(std::move(library)) {}

  BackendOutput predict(Tape& tape, Var z_t, const PromptSpec& prompt, const Schedule& schedule,
                        double t) const override;
  Var predict_uncond(Tape& tape, Var z_t, const Schedule& schedule, double t) const override;

  const PrototypeLibrary& library() const { return lib_; }
  /// Posterior weights over the prompt's prototypes at (z_t, t).
  std::vector<double> posterior_weights(const Tensor& z_t, const std::string& prompt_id,
                                        const Schedule& schedule, double t) const;

 private:
  Var mixture_z0(Tape& tape, Var z_t, const std::vector<std::pair<const Tensor*, double>>& comps,
                 const Schedule& schedule, double t) const;
  Var prediction_from_z0(Tape& tape, Var z_t, Var z0_hat, const Schedule& schedule, double t) const;

  PrototypeLibrary lib_;
};

/// One-layer cross-attention denoiser over patchified latents, with learned
/// entity-token embeddings standing in for a text encoder.
struct ToyBackendWeights {
  int vocab_size = 8;
  int channels = 4, height = 16, width = 16;
  int d_model = 16;
  std::vector<std::string> names;
  std::map<std::string, Tensor> params;

  static ToyBackendWeights init(int vocab_size, int channels, int height, int width, int d_model,
                                std::mt19937_64& rng);
  std::string to_json() const;
  static ToyBackendWeights from_json(const std::string& text);
};

class LearnedBackend : public Backend {
 public:
  explicit LearnedBackend(ToyBackendWeights weights) : w_(std::move(weights)) {}

  BackendOutput predict(Tape& tape, Var z_t, const PromptSpec& prompt, const Schedule& schedule,
                        double t) const override;
  Var predict_uncond(Tape& tape, Var z_t, const Schedule& schedule, double t) const override;

  const ToyBackendWeights& weights() const { return w_; }

  /// Forward pass with explicit parameter vars (used by training).
  static BackendOutput forward(Tape& tape, Var z_t, const PromptSpec& prompt, double t,
                               const ToyBackendWeights& meta, const std::map<std::string, Var>& params);

 private:
  ToyBackendWeights w_;
};

struct TrainResult {
  ToyBackendWeights weights;
  std::vector<double> loss_curve;  // mean per-sample loss per epoch
};

/// Minimize mean squared prediction error (target: eps for vp, eps - z0 for
/// flow) over clean scenes sampled from the library, SGD, uniform t.
TrainResult train_toy_backend(const PrototypeLibrary& dataset, const Schedule& schedule, int epochs,
                              double lr, int batch, uint64_t seed, int d_model = 16);

/// x100 scaling, spatial softmax, 3x3 Gaussian smoothing (sigma 0.5,
/// zero-padded, renormalized to unit sum).
AttentionMaps preprocess_attention(Tape& tape, const AttentionMaps& raw);

Tensor gaussian_kernel3(double sigma = 0.5);

}  // namespace saga
