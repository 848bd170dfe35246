// SPDX-License-Identifier: Apache-2.0
#include "saga/prior.hpp"

#include <cmath>
#include <stdexcept>

namespace saga {

namespace {

constexpr double kCholDiagFloor = 1e-4;

struct CovLayout {
  int64_t channels = 0, hw = 0, nblocks = 0, block = 0;
};

CovLayout layout_of(const GaussianPrior& prior) {
  CovLayout l;
  l.channels = prior.mu.shape()[0];
  l.hw = prior.mu.shape()[1] * prior.mu.shape()[2];
  if (prior.cov.kind == CovKind::Block) {
    l.block = prior.cov.block;
    if (l.block < 1 || l.hw % l.block != 0) throw std::invalid_argument("block size must divide H*W");
    l.nblocks = l.hw / l.block;
  }
  return l;
}

Shape chol_shape(const CovParam& cov, int64_t channels, int64_t h, int64_t w) {
  int64_t hw = h * w;
  switch (cov.kind) {
    case CovKind::Fixed:
      return Shape{1};
    case CovKind::Scalar:
      return cov.per_channel ? Shape{channels, 1, 1} : Shape{1};
    case CovKind::Diag:
      return cov.per_channel ? Shape{channels, h, w} : Shape{1, h, w};
    case CovKind::Block: {
      int64_t nb = hw / cov.block;
      return cov.per_channel ? Shape{channels, nb, cov.block, cov.block} : Shape{nb, cov.block, cov.block};
    }
  }
  throw std::logic_error("unreachable cov kind");
}

Tensor init_chol(const CovParam& cov, int64_t channels, int64_t h, int64_t w, double b) {
  Shape shape = chol_shape(cov, channels, h, w);
  if (cov.kind == CovKind::Block) {
    Tensor t(shape);
    int64_t bs = cov.block;
    int64_t nmat = t.size() / (bs * bs);
    for (int64_t m = 0; m < nmat; ++m)
      for (int64_t r = 0; r < bs; ++r) t[(m * bs + r) * bs + r] = b;
    return t;
  }
  return Tensor(shape, b);
}

void clamp_chol_diag(Tensor& chol, const CovParam& cov) {
  if (cov.kind == CovKind::Block) {
    int64_t bs = cov.block;
    int64_t nmat = chol.size() / (bs * bs);
    for (int64_t m = 0; m < nmat; ++m)
      for (int64_t r = 0; r < bs; ++r) {
        double& v = chol[(m * bs + r) * bs + r];
        if (v < kCholDiagFloor) v = kCholDiagFloor;
      }
    return;
  }
  // scalar and diag storage holds only diagonal entries
  for (int64_t i = 0; i < chol.size(); ++i) {
    if (chol[i] < kCholDiagFloor) chol[i] = kCholDiagFloor;
  }
}

Tensor block_apply_value(const Tensor& chol, const Tensor& eps, const CovLayout& l, bool per_channel) {
  Tensor out(eps.shape());
  int64_t bs = l.block;
  for (int64_t ch = 0; ch < l.channels; ++ch) {
    int64_t chol_off = per_channel ? ch * l.nblocks * bs * bs : 0;
    for (int64_t blk = 0; blk < l.nblocks; ++blk) {
      int64_t base = ch * l.hw + blk * bs;
      int64_t gbase = chol_off + blk * bs * bs;
      for (int64_t r = 0; r < bs; ++r) {
        double acc = 0.0;
        for (int64_t c = 0; c < bs; ++c) acc += chol[gbase + r * bs + c] * eps[base + c];
        out[base + r] = acc;
      }
    }
  }
  return out;
}

}  // namespace

int64_t GaussianPrior::chol_param_count() const {
  if (cov.kind == CovKind::Fixed) return 0;
  return chol.size();
}

OptimConfig default_optim(ScheduleKind kind) {
  OptimConfig c;
  if (kind == ScheduleKind::LinearFlow) {
    c.momentum = 0.7;
    c.batch = 4;
  } else {
    c.momentum = 0.4;
    c.batch = 10;
  }
  return c;
}

double tensor_std(const Tensor& t) {
  double mean = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) mean += t[i];
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) {
    double d = t[i] - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(t.size()));
}

Tensor rescale_mu(const Tensor& mu, double sigma_ref) {
  if (sigma_ref <= 0.0) throw std::invalid_argument("rescale_mu: sigma_ref must be positive");
  double sd = tensor_std(mu);
  if (sd <= sigma_ref) return mu;
  return t_scale(mu, sigma_ref / sd);
}

GaussianPrior init_prior(const Tensor& z_t, const Backend& backend, const PromptSpec& prompt,
                         const Schedule& schedule, double t_star, CovParam cov) {
  Tape tape;
  BackendOutput out = backend.predict(tape, tape.leaf(z_t), prompt, schedule, t_star);
  const Tensor& z0_hat = tape.value(out.z0_hat);

  int64_t c = z0_hat.shape()[0], h = z0_hat.shape()[1], w = z0_hat.shape()[2];
  GaussianPrior prior;
  prior.t_star = t_star;
  prior.schedule_kind = schedule.kind();
  prior.cov = cov;
  prior.mu = Tensor(z0_hat.shape());
  for (int64_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (int64_t i = 0; i < h * w; ++i) mean += z0_hat[ch * h * w + i];
    mean /= static_cast<double>(h * w);
    for (int64_t i = 0; i < h * w; ++i) prior.mu[ch * h * w + i] = mean;
  }
  prior.sigma_ref = tensor_std(z0_hat);
  prior.chol = init_chol(cov, c, h, w, schedule.b(t_star));
  return prior;
}

Tensor apply_chol(const GaussianPrior& prior, const Tensor& eps, double /*b_tstar*/) {
  if (prior.cov.kind == CovKind::Block) {
    return block_apply_value(prior.chol, eps, layout_of(prior), prior.cov.per_channel);
  }
  return t_mul(prior.chol, eps);
}

Var apply_chol(Tape& tape, const GaussianPrior& prior, Var chol_param, const Tensor& eps) {
  if (prior.cov.kind != CovKind::Block) {
    return tape.mul(chol_param, tape.leaf(eps));
  }
  CovLayout l = layout_of(prior);
  bool per_channel = prior.cov.per_channel;
  Tensor value = block_apply_value(tape.value(chol_param), eps, l, per_channel);
  Shape chol_sh = tape.value(chol_param).shape();
  int64_t bs = l.block;
  return tape.custom(std::move(value), [chol_param, eps, l, per_channel, chol_sh, bs](const Tensor& g, Tape& t) {
    // d out[base+r] / d G[r, c] = eps[base+c]
    Tensor gc(chol_sh);
    for (int64_t ch = 0; ch < l.channels; ++ch) {
      int64_t chol_off = per_channel ? ch * l.nblocks * bs * bs : 0;
      for (int64_t blk = 0; blk < l.nblocks; ++blk) {
        int64_t base = ch * l.hw + blk * bs;
        int64_t gbase = chol_off + blk * bs * bs;
        for (int64_t r = 0; r < bs; ++r)
          for (int64_t c = 0; c < bs; ++c) gc[gbase + r * bs + c] += g[base + r] * eps[base + c];
      }
    }
    t.add_grad(chol_param, gc);
  });
}

std::vector<Tensor> sample_prior(const GaussianPrior& prior, const Schedule& schedule,
                                 std::mt19937_64& rng, int n) {
  if (n < 1) throw std::invalid_argument("sample_prior: n must be >= 1");
  double a = schedule.a(prior.t_star);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor eps(prior.mu.shape());
    for (int64_t j = 0; j < eps.size(); ++j) eps[j] = normal(rng);
    out.push_back(t_add(t_scale(prior.mu, a), apply_chol(prior, eps, schedule.b(prior.t_star))));
  }
  return out;
}

LearnResult learn_prior_with_loss(GaussianPrior prior, const LatentLoss& loss, const Schedule& schedule,
                                  const OptimConfig& config, std::mt19937_64& rng) {
  if (config.steps < 0 || config.lr <= 0.0 || config.momentum < 0.0 || config.momentum >= 1.0 ||
      config.batch < 1) {
    throw std::invalid_argument("invalid optimizer configuration");
  }
  double a = schedule.a(prior.t_star);
  bool learn_cov = prior.cov.learnable();
  std::normal_distribution<double> normal(0.0, 1.0);

  Tensor v_mu(prior.mu.shape());
  Tensor v_chol(prior.chol.shape());
  LearnResult result;

  for (int step = 0; step < config.steps; ++step) {
    Tape tape;
    Var mu = tape.leaf(prior.mu);
    Var chol = tape.leaf(prior.chol);
    Var mean_loss = tape.leaf(Tensor::scalar(0.0));
    for (int j = 0; j < config.batch; ++j) {
      Tensor eps(prior.mu.shape());
      for (int64_t i = 0; i < eps.size(); ++i) eps[i] = normal(rng);
      Var z = tape.add(tape.scale(mu, a), apply_chol(tape, prior, chol, eps));
      mean_loss = tape.add(mean_loss, loss(tape, z));
    }
    mean_loss = tape.scale(mean_loss, 1.0 / config.batch);
    double loss_v = tape.value(mean_loss).item();
    if (!std::isfinite(loss_v)) {
      throw std::runtime_error("learn_prior: non-finite loss at step " + std::to_string(step));
    }
    tape.backward(mean_loss);

    Tensor g_mu = tape.grad(mu);
    if (g_mu.size() == 0) g_mu = Tensor(prior.mu.shape());
    if (!g_mu.all_finite()) {
      throw std::runtime_error("learn_prior: non-finite gradient at step " + std::to_string(step));
    }
    for (int64_t i = 0; i < prior.mu.size(); ++i) {
      v_mu[i] = config.momentum * v_mu[i] - config.lr * g_mu[i];
      prior.mu[i] += v_mu[i];
    }
    if (learn_cov) {
      Tensor g_chol = tape.grad(chol);
      if (g_chol.size() == 0) g_chol = Tensor(prior.chol.shape());
      if (!g_chol.all_finite()) {
        throw std::runtime_error("learn_prior: non-finite covariance gradient at step " + std::to_string(step));
      }
      for (int64_t i = 0; i < prior.chol.size(); ++i) {
        v_chol[i] = config.momentum * v_chol[i] - config.lr * g_chol[i];
        prior.chol[i] += v_chol[i];
      }
      clamp_chol_diag(prior.chol, prior.cov);
    }
    if (config.rescale) prior.mu = rescale_mu(prior.mu, prior.sigma_ref);
    result.loss_trace.push_back(loss_v);
    result.mu_std_trace.push_back(tensor_std(prior.mu));
  }
  result.prior = std::move(prior);
  return result;
}

LearnResult learn_prior(GaussianPrior prior, const Backend& backend, const CriterionConfig& criterion,
                        const Schedule& schedule, const PromptSpec& prompt, const OptimConfig& config,
                        std::mt19937_64& rng) {
  double t_star = prior.t_star;
  LatentLoss loss = [&](Tape& tape, Var z) {
    BackendOutput out = backend.predict(tape, z, prompt, schedule, t_star);
    AttentionMaps maps = preprocess_attention(tape, out.raw_maps);
    return loss_combined(tape, maps, criterion);
  };
  return learn_prior_with_loss(std::move(prior), loss, schedule, config, rng);
}

double expected_criterion(const GaussianPrior& prior, const Backend& backend,
                          const CriterionConfig& criterion, const Schedule& schedule,
                          const PromptSpec& prompt, std::mt19937_64& rng, int n) {
  std::vector<Tensor> draws = sample_prior(prior, schedule, rng, n);
  double acc = 0.0;
  for (const Tensor& z : draws) {
    Tape tape;
    BackendOutput out = backend.predict(tape, tape.leaf(z), prompt, schedule, prior.t_star);
    AttentionMaps maps = preprocess_attention(tape, out.raw_maps);
    acc += tape.value(loss_combined(tape, maps, criterion)).item();
  }
  return acc / static_cast<double>(n);
}

}  // namespace saga
