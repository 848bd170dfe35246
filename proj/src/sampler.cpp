// SPDX-License-Identifier: Apache-2.0
#include "saga/sampler.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace saga {

using nlohmann::json;

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

RngStream RngStream::root(uint64_t seed) { return RngStream(mix64(seed)); }

RngStream RngStream::child(const std::string& name) const {
  uint64_t h = key_;
  for (unsigned char c : name) h = mix64(h ^ c);
  return RngStream(h);
}

RngStream RngStream::child(uint64_t index) const { return RngStream(mix64(key_ ^ index)); }

std::string method_name(Method m) {
  switch (m) {
    case Method::Vanilla: return "vanilla";
    case Method::Gsn: return "gsn";
    case Method::Saga: return "saga";
    case Method::SagaUni: return "saga-uni";
    case Method::SagaSigma: return "saga-sigma";
    case Method::SagaUniSigma: return "saga-uni-sigma";
    case Method::SagaPlus: return "saga-plus";
    case Method::SagaSigmaPlus: return "saga-sigma-plus";
    case Method::SagaBbox: return "saga-bbox";
    case Method::SagaPlusBbox: return "saga-plus-bbox";
  }
  throw std::logic_error("unreachable method");
}

Method method_from_name(const std::string& name) {
  for (Method m : {Method::Vanilla, Method::Gsn, Method::Saga, Method::SagaUni, Method::SagaSigma,
                   Method::SagaUniSigma, Method::SagaPlus, Method::SagaSigmaPlus, Method::SagaBbox,
                   Method::SagaPlusBbox}) {
    if (method_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown method: " + name);
}

bool method_learns_prior(Method m) { return m != Method::Vanilla && m != Method::Gsn; }

bool method_uses_guidance(Method m) {
  return m == Method::Gsn || m == Method::SagaPlus || m == Method::SagaSigmaPlus ||
         m == Method::SagaPlusBbox;
}

bool method_learns_cov(Method m) {
  return m == Method::SagaSigma || m == Method::SagaUniSigma || m == Method::SagaSigmaPlus;
}

bool method_uses_boxes(Method m) { return m == Method::SagaBbox || m == Method::SagaPlusBbox; }

int PipelineConfig::resolve_t_star(const Schedule& schedule) const {
  if (t_star_index >= 0) return t_star_index;
  return schedule.kind() == ScheduleKind::VpDiffusion ? 10 : 5;
}

int PipelineConfig::resolve_cutoff(const Schedule& schedule) const {
  if (cutoff_index >= 0) return cutoff_index;
  return schedule.num_solver_steps() / 2;
}

void PipelineConfig::validate(const Schedule& schedule) const {
  int n = schedule.num_solver_steps();
  if (method_learns_prior(method) && resolve_t_star(schedule) >= n) {
    throw std::invalid_argument("t* index beyond the sampling grid");
  }
  if (resolve_cutoff(schedule) > n) throw std::invalid_argument("guidance cutoff beyond the grid");
  if (guidance_lr < 0.0) throw std::invalid_argument("guidance lr must be nonnegative");
  if (cfg_scale <= 0.0) throw std::invalid_argument("cfg scale must be positive");
}

namespace {

Tensor draw_normal(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

Tensor backend_prediction(const Backend& backend, const Tensor& z, const PromptSpec& prompt,
                          const Schedule& schedule, double t, double cfg_scale) {
  Tape tape;
  Var zv = tape.leaf(z);
  BackendOutput out = backend.predict(tape, zv, prompt, schedule, t);
  if (cfg_scale == 1.0) return tape.value(out.prediction);
  Var uncond = backend.predict_uncond(tape, zv, schedule, t);
  const Tensor& c = tape.value(out.prediction);
  const Tensor& u = tape.value(uncond);
  return t_add(u, t_scale(t_sub(c, u), cfg_scale));
}

struct ChainState {
  Tensor z;
  int solver_calls = 0;
  std::vector<double> guidance_trace;
};

/// Denoise grid positions [from, to). When `guided`, apply one criterion
/// gradient update before each solver step at positions below the cutoff,
/// with the step size decayed linearly to 0 at the cutoff.
void run_chain(ChainState& state, int from, int to, const PromptSpec& prompt,
               const Schedule& schedule, const Backend& backend, const CriterionConfig* criterion,
               const PipelineConfig& config, bool guided, std::mt19937_64& solver_rng) {
  int cutoff = config.resolve_cutoff(schedule);
  bool apply_guidance = guided && criterion != nullptr && config.guidance_lr > 0.0;
  for (int i = from; i < to; ++i) {
    double t = schedule.grid()[static_cast<size_t>(i)];
    double t_next = schedule.step_target(i);
    if (apply_guidance && i < cutoff) {
      double alpha = config.guidance_lr * static_cast<double>(cutoff - i) / cutoff;
      Tape tape;
      Var zv = tape.leaf(state.z);
      BackendOutput out = backend.predict(tape, zv, prompt, schedule, t);
      AttentionMaps pre = preprocess_attention(tape, out.raw_maps);
      Var loss = loss_combined(tape, pre, *criterion);
      state.guidance_trace.push_back(tape.value(loss).item());
      tape.backward(loss);
      const Tensor& g = tape.grad(zv);
      if (g.size() != 0) {
        state.z = t_sub(state.z, t_scale(g, alpha));
        if (!state.z.all_finite()) {
          throw std::runtime_error("guidance produced a non-finite latent at grid position " +
                                   std::to_string(i));
        }
      }
    }
    Tensor pred = backend_prediction(backend, state.z, prompt, schedule, t, config.cfg_scale);
    state.z = schedule.solver_step(state.z, pred, t, t_next, solver_rng);
    ++state.solver_calls;
  }
}

Shape latent_shape_of(const Backend& backend, const PromptSpec& prompt, const Schedule& schedule) {
  // every backend in this repo carries its scene geometry
  if (auto* a = dynamic_cast<const AnalyticBackend*>(&backend)) {
    return Shape{a->library().channels, a->library().height, a->library().width};
  }
  if (auto* l = dynamic_cast<const LearnedBackend*>(&backend)) {
    return Shape{l->weights().channels, l->weights().height, l->weights().width};
  }
  (void)prompt;
  (void)schedule;
  throw std::invalid_argument("unknown backend type, latent shape undetermined");
}

CriterionConfig criterion_for(Method m, const PromptSpec& prompt) {
  CriterionConfig c;
  if (method_uses_boxes(m)) {
    c.kind = CriterionKind::BboxCombined;
    c.boxes = prompt.boxes;
  }
  return c;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void finish_record(GenerationRecord& rec, const ChainState& state, const Schedule& schedule,
                   const Timer& timer) {
  if (state.solver_calls != schedule.num_solver_steps()) {
    throw std::logic_error("pipeline consumed " + std::to_string(state.solver_calls) +
                           " solver calls, expected " + std::to_string(schedule.num_solver_steps()));
  }
  rec.z0 = state.z;
  rec.solver_calls = state.solver_calls;
  rec.guidance_trace = state.guidance_trace;
  rec.wall_seconds = timer.seconds();
}

}  // namespace

GenerationRecord generate_vanilla(const PromptSpec& prompt, const Schedule& schedule,
                                  const Backend& backend, const PipelineConfig& config,
                                  uint64_t seed) {
  config.validate(schedule);
  Timer timer;
  RngStream rng = RngStream::root(seed);
  auto chain_rng = rng.child("chain").engine();
  auto solver_rng = rng.child("solver").engine();

  ChainState state;
  state.z = draw_normal(latent_shape_of(backend, prompt, schedule), chain_rng);
  run_chain(state, 0, schedule.num_solver_steps(), prompt, schedule, backend, nullptr, config,
            false, solver_rng);

  GenerationRecord rec;
  rec.prompt_id = prompt.id;
  rec.seed = seed;
  rec.method = method_name(Method::Vanilla);
  finish_record(rec, state, schedule, timer);
  return rec;
}

GenerationRecord generate_gsn(const PromptSpec& prompt, const Schedule& schedule,
                              const Backend& backend, const CriterionConfig& criterion,
                              const PipelineConfig& config, uint64_t seed) {
  config.validate(schedule);
  Timer timer;
  RngStream rng = RngStream::root(seed);
  auto chain_rng = rng.child("chain").engine();
  auto solver_rng = rng.child("solver").engine();

  ChainState state;
  state.z = draw_normal(latent_shape_of(backend, prompt, schedule), chain_rng);
  run_chain(state, 0, schedule.num_solver_steps(), prompt, schedule, backend, &criterion, config,
            true, solver_rng);

  GenerationRecord rec;
  rec.prompt_id = prompt.id;
  rec.seed = seed;
  rec.method = method_name(Method::Gsn);
  finish_record(rec, state, schedule, timer);
  return rec;
}

namespace {

struct LearnedStage {
  GaussianPrior prior;
  std::vector<double> loss_trace;
  int chain_calls = 0;
  int t_star_index = 0;
  double t_star = 0.0;
};

/// Shared first half of every prior-learning pipeline: denoise to t*, learn.
LearnedStage learn_stage(const PromptSpec& prompt, const Schedule& schedule, const Backend& backend,
                         const CriterionConfig& criterion, const OptimConfig& optim,
                         const PipelineConfig& config, const RngStream& rng) {
  LearnedStage stage;
  stage.t_star_index = config.resolve_t_star(schedule);
  stage.t_star = schedule.grid()[static_cast<size_t>(stage.t_star_index)];

  auto chain_rng = rng.child("chain").engine();
  auto solver_rng = rng.child("solver").engine();
  ChainState state;
  state.z = draw_normal(latent_shape_of(backend, prompt, schedule), chain_rng);
  run_chain(state, 0, stage.t_star_index, prompt, schedule, backend, nullptr, config, false,
            solver_rng);
  stage.chain_calls = state.solver_calls;

  CovParam cov = config.cov;
  if (!method_learns_cov(config.method)) cov = CovParam{CovKind::Fixed};
  else if (cov.kind == CovKind::Fixed) cov = CovParam{CovKind::Scalar};
  GaussianPrior prior = init_prior(state.z, backend, prompt, schedule, stage.t_star, cov);
  auto prior_rng = rng.child("prior").engine();
  auto learned = learn_prior(std::move(prior), backend, criterion, schedule, prompt, optim, prior_rng);
  stage.prior = std::move(learned.prior);
  stage.loss_trace = std::move(learned.loss_trace);
  return stage;
}

PriorSummary summarize(const LearnedStage& stage) {
  PriorSummary s;
  s.present = true;
  s.t_star = stage.t_star;
  s.mu_std = tensor_std(stage.prior.mu);
  s.sigma_ref = stage.prior.sigma_ref;
  s.final_loss = stage.loss_trace.empty() ? 0.0 : stage.loss_trace.back();
  return s;
}

GenerationRecord finish_from_prior(const LearnedStage& stage, const PromptSpec& prompt,
                                   const Schedule& schedule, const Backend& backend,
                                   const CriterionConfig& criterion, const PipelineConfig& config,
                                   bool guided, const RngStream& sample_stream, uint64_t seed,
                                   const Timer& timer) {
  auto draw_rng = sample_stream.child("draw").engine();
  auto solver_rng = sample_stream.child("solver").engine();

  ChainState state;
  state.z = sample_prior(stage.prior, schedule, draw_rng, 1)[0];
  state.solver_calls = stage.chain_calls;
  run_chain(state, stage.t_star_index, schedule.num_solver_steps(), prompt, schedule, backend,
            &criterion, config, guided, solver_rng);

  GenerationRecord rec;
  rec.prompt_id = prompt.id;
  rec.seed = seed;
  rec.method = method_name(config.method);
  rec.t_star = stage.t_star;
  rec.prior = summarize(stage);
  rec.prior_loss_trace = stage.loss_trace;
  finish_record(rec, state, schedule, timer);
  return rec;
}

}  // namespace

GenerationRecord generate_saga(const PromptSpec& prompt, const Schedule& schedule,
                               const Backend& backend, const CriterionConfig& criterion,
                               const OptimConfig& optim, const PipelineConfig& config,
                               uint64_t seed) {
  config.validate(schedule);
  Timer timer;
  RngStream rng = RngStream::root(seed);
  LearnedStage stage = learn_stage(prompt, schedule, backend, criterion, optim, config, rng);
  bool guided = method_uses_guidance(config.method);
  return finish_from_prior(stage, prompt, schedule, backend, criterion, config, guided,
                           rng.child("sample"), seed, timer);
}

std::vector<GenerationRecord> generate_saga_uni(const PromptSpec& prompt, const Schedule& schedule,
                                                const Backend& backend,
                                                const CriterionConfig& criterion,
                                                const OptimConfig& optim,
                                                const PipelineConfig& config, int n,
                                                uint64_t seed) {
  if (n < 1) throw std::invalid_argument("saga-uni needs n >= 1");
  config.validate(schedule);
  Timer timer;
  RngStream rng = RngStream::root(seed);
  LearnedStage stage = learn_stage(prompt, schedule, backend, criterion, optim, config, rng);
  // when the chain has already consumed calls, each record still accounts a
  // full grid pass: the shared prefix is charged to every draw
  std::vector<GenerationRecord> out;
  out.reserve(static_cast<size_t>(n));
  bool guided = method_uses_guidance(config.method);
  for (int i = 0; i < n; ++i) {
    out.push_back(finish_from_prior(stage, prompt, schedule, backend, criterion, config, guided,
                                    rng.child("sample").child(static_cast<uint64_t>(i)), seed,
                                    timer));
  }
  return out;
}

GenerationRecord generate_saga_plus(const PromptSpec& prompt, const Schedule& schedule,
                                    const Backend& backend, const CriterionConfig& criterion,
                                    const OptimConfig& optim, const PipelineConfig& config,
                                    uint64_t seed) {
  return generate_saga(prompt, schedule, backend, criterion, optim, config, seed);
}

std::vector<GenerationRecord> generate(const PromptSpec& prompt, const Schedule& schedule,
                                       const Backend& backend, const OptimConfig& optim,
                                       const PipelineConfig& config, int n, uint64_t seed) {
  CriterionConfig criterion = criterion_for(config.method, prompt);
  switch (config.method) {
    case Method::Vanilla:
      return {generate_vanilla(prompt, schedule, backend, config, seed)};
    case Method::Gsn:
      return {generate_gsn(prompt, schedule, backend, criterion, config, seed)};
    case Method::SagaUni:
    case Method::SagaUniSigma:
      return generate_saga_uni(prompt, schedule, backend, criterion, optim, config, n, seed);
    case Method::Saga:
    case Method::SagaSigma:
    case Method::SagaBbox:
      return {generate_saga(prompt, schedule, backend, criterion, optim, config, seed)};
    case Method::SagaPlus:
    case Method::SagaSigmaPlus:
    case Method::SagaPlusBbox:
      return {generate_saga_plus(prompt, schedule, backend, criterion, optim, config, seed)};
  }
  throw std::logic_error("unreachable method");
}

// ---------------------------------------------------------------------------
// Serialization

std::string GenerationRecord::to_json() const {
  json j;
  j["schema"] = 1;
  j["kind"] = "generation-record";
  j["prompt_id"] = prompt_id;
  j["seed"] = seed;
  j["method"] = method;
  j["z0"] = {{"shape", z0.shape()}, {"data", z0.data()}};
  j["t_star"] = t_star;
  if (prior.present) {
    j["prior"] = {{"t_star", prior.t_star},
                  {"mu_std", prior.mu_std},
                  {"sigma_ref", prior.sigma_ref},
                  {"final_loss", prior.final_loss}};
  }
  j["guidance_trace"] = guidance_trace;
  j["prior_loss_trace"] = prior_loss_trace;
  j["solver_calls"] = solver_calls;
  // wall time deliberately omitted: records must be byte-identical across
  // reruns, timing goes to side metadata
  return j.dump();
}

GenerationRecord GenerationRecord::from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.at("schema").get<int>() != 1 || j.at("kind") != "generation-record") {
    throw std::invalid_argument("not a schema-1 generation record");
  }
  GenerationRecord r;
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  r.method = j.at("method").get<std::string>();
  r.z0 = Tensor(j.at("z0").at("shape").get<Shape>(), j.at("z0").at("data").get<std::vector<double>>());
  r.t_star = j.at("t_star").get<double>();
  if (j.contains("prior")) {
    r.prior.present = true;
    r.prior.t_star = j.at("prior").at("t_star").get<double>();
    r.prior.mu_std = j.at("prior").at("mu_std").get<double>();
    r.prior.sigma_ref = j.at("prior").at("sigma_ref").get<double>();
    r.prior.final_loss = j.at("prior").at("final_loss").get<double>();
  }
  r.guidance_trace = j.at("guidance_trace").get<std::vector<double>>();
  r.prior_loss_trace = j.at("prior_loss_trace").get<std::vector<double>>();
  r.solver_calls = j.at("solver_calls").get<int>();
  return r;
}

}  // namespace saga
