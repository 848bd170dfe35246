// SPDX-License-Identifier: Apache-2.0
#include "saga/backend.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace saga {

using nlohmann::json;

void PromptSpec::validate(int vocab_size, int height, int width) const {
  if (entities.empty() || entities.size() > 4) {
    throw std::invalid_argument("prompt " + id + ": 1..4 entities required");
  }
  std::set<int> seen;
  for (int e : entities) {
    if (e < 0 || e >= vocab_size) throw std::invalid_argument("prompt " + id + ": entity id out of vocabulary");
    if (!seen.insert(e).second) throw std::invalid_argument("prompt " + id + ": duplicate entity id");
  }
  if (!boxes.empty()) {
    if (boxes.size() != entities.size()) {
      throw std::invalid_argument("prompt " + id + ": boxes must cover exactly the entities");
    }
    for (const Box& b : boxes) {
      if (!(b[0] < b[2] && b[1] < b[3]) || b[0] < 0 || b[1] < 0 || b[2] > width || b[3] > height) {
        throw std::invalid_argument("prompt " + id + ": malformed box");
      }
    }
    for (size_t i = 0; i < boxes.size(); ++i)
      for (size_t j = i + 1; j < boxes.size(); ++j) {
        const Box &a = boxes[i], &b = boxes[j];
        bool overlap = a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3];
        if (overlap) throw std::invalid_argument("prompt " + id + ": boxes must be pairwise disjoint");
      }
  }
}

std::vector<Tensor> make_entity_templates(int vocab_size, int channels) {
  // Sylvester-Hadamard rows give orthogonal signatures; the negated copies
  // extend the vocabulary to 2*channels with anti-correlated counterparts.
  if ((channels & (channels - 1)) != 0) throw std::invalid_argument("templates require power-of-two channels");
  if (vocab_size > 2 * channels) throw std::invalid_argument("vocabulary larger than 2*channels unsupported");
  std::vector<std::vector<double>> h = {{1.0}};
  for (int n = 1; n < channels; n *= 2) {
    std::vector<std::vector<double>> next(static_cast<size_t>(2 * n), std::vector<double>(static_cast<size_t>(2 * n)));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double v = h[static_cast<size_t>(i)][static_cast<size_t>(j)];
        next[static_cast<size_t>(i)][static_cast<size_t>(j)] = v;
        next[static_cast<size_t>(i)][static_cast<size_t>(j + n)] = v;
        next[static_cast<size_t>(i + n)][static_cast<size_t>(j)] = v;
        next[static_cast<size_t>(i + n)][static_cast<size_t>(j + n)] = -v;
      }
    h = std::move(next);
  }
  double norm = std::sqrt(static_cast<double>(channels));
  std::vector<Tensor> out;
  for (int s = 0; s < vocab_size; ++s) {
    Tensor g(Shape{channels});
    int row = s % channels;
    double sign = s < channels ? 1.0 : -1.0;
    for (int c = 0; c < channels; ++c) g[c] = sign * h[static_cast<size_t>(row)][static_cast<size_t>(c)] / norm;
    out.push_back(std::move(g));
  }
  return out;
}

const PrototypeLibrary::PromptEntry& PrototypeLibrary::entry(const std::string& prompt_id) const {
  auto it = prompts.find(prompt_id);
  if (it == prompts.end()) throw std::invalid_argument("prompt not in library: " + prompt_id);
  return it->second;
}

std::vector<std::pair<const Tensor*, double>> PrototypeLibrary::unconditional() const {
  std::vector<std::pair<const Tensor*, double>> out;
  double total = 0.0;
  for (const auto& [id, e] : prompts) total += std::accumulate(e.weights.begin(), e.weights.end(), 0.0);
  for (const auto& [id, e] : prompts)
    for (size_t k = 0; k < e.prototypes.size(); ++k) out.emplace_back(&e.prototypes[k], e.weights[k] / total);
  return out;
}

PrototypeLibrary build_scene_dataset(int vocab_size, int channels, int height, int width,
                                     double blob_sigma, const std::vector<PromptSpec>& prompts,
                                     int k_per_prompt, std::mt19937_64& rng) {
  if (k_per_prompt < 1) throw std::invalid_argument("k_per_prompt must be >= 1");
  int margin = static_cast<int>(std::ceil(blob_sigma));
  if (2 * margin >= height || 2 * margin >= width) throw std::invalid_argument("blob does not fit in grid");

  PrototypeLibrary lib;
  lib.vocab_size = vocab_size;
  lib.channels = channels;
  lib.height = height;
  lib.width = width;
  lib.blob_sigma = blob_sigma;
  lib.templates = make_entity_templates(vocab_size, channels);

  for (const PromptSpec& p : prompts) {
    p.validate(vocab_size, height, width);
    for (size_t ei = 0; ei < p.boxes.size(); ++ei) {
      const Box& b = p.boxes[ei];
      if (b[2] - b[0] < margin || b[3] - b[1] < margin) {
        throw std::invalid_argument("prompt " + p.id + ": box too small for blob");
      }
    }
    PrototypeLibrary::PromptEntry e;
    e.prompt = p;
    for (int k = 0; k < k_per_prompt; ++k) {
      Tensor proto(Shape{channels, height, width});
      std::vector<std::pair<double, double>> centers;
      for (size_t ei = 0; ei < p.entities.size(); ++ei) {
        int lo_r = margin, hi_r = height - 1 - margin;
        int lo_c = margin, hi_c = width - 1 - margin;
        if (!p.boxes.empty()) {
          const Box& b = p.boxes[ei];
          lo_c = b[0];
          hi_c = b[2] - 1;
          lo_r = b[1];
          hi_r = b[3] - 1;
        }
        std::uniform_int_distribution<int> dr(lo_r, hi_r), dc(lo_c, hi_c);
        int r = 0, c = 0;
        bool collided = true;
        while (collided) {
          r = dr(rng);
          c = dc(rng);
          collided = false;
          for (const auto& prev : centers) {
            if (static_cast<int>(prev.first) == r && static_cast<int>(prev.second) == c) collided = true;
          }
        }
        centers.emplace_back(static_cast<double>(r), static_cast<double>(c));
        const Tensor& g = lib.templates[static_cast<size_t>(p.entities[ei])];
        double inv2s2 = 1.0 / (2.0 * blob_sigma * blob_sigma);
        for (int ch = 0; ch < channels; ++ch)
          for (int i = 0; i < height; ++i)
            for (int j = 0; j < width; ++j) {
              double d2 = (i - r) * static_cast<double>(i - r) + (j - c) * static_cast<double>(j - c);
              proto[(static_cast<int64_t>(ch) * height + i) * width + j] += g[ch] * std::exp(-d2 * inv2s2);
            }
      }
      e.prototypes.push_back(std::move(proto));
      e.centers.push_back(std::move(centers));
      e.weights.push_back(1.0 / k_per_prompt);
    }
    lib.prompts.emplace(p.id, std::move(e));
  }
  return lib;
}

// ---------------------------------------------------------------------------
// Analytic backend

Var AnalyticBackend::mixture_z0(Tape& tape, Var z_t,
                                const std::vector<std::pair<const Tensor*, double>>& comps,
                                const Schedule& schedule, double t) const {
  double at = schedule.a(t), bt = schedule.b(t);
  if (bt == 0.0) throw std::domain_error("analytic_predict: b_t = 0, posterior degenerate");
  std::vector<Var> logits;
  logits.reserve(comps.size());
  for (const auto& [m, pi] : comps) {
    Var diff = tape.sub(z_t, tape.leaf(t_scale(*m, at)));
    Var d2 = tape.sum(tape.square(diff));
    logits.push_back(tape.add(tape.leaf(Tensor::scalar(std::log(pi))),
                              tape.scale(d2, -1.0 / (2.0 * bt * bt))));
  }
  Var w = tape.softmax(tape.stack_scalars(logits), 0);
  Var acc = tape.leaf(Tensor(comps[0].first->shape()));
  for (size_t k = 0; k < comps.size(); ++k) {
    acc = tape.add(acc, tape.mul(tape.pick(w, static_cast<int64_t>(k)), tape.leaf(*comps[k].first)));
  }
  return acc;
}

Var AnalyticBackend::prediction_from_z0(Tape& tape, Var z_t, Var z0_hat, const Schedule& schedule,
                                        double t) const {
  double at = schedule.a(t), bt = schedule.b(t);
  double coeff = schedule.kind() == ScheduleKind::VpDiffusion ? at : at + bt;
  return tape.scale(tape.sub(z_t, tape.scale(z0_hat, coeff)), 1.0 / bt);
}

BackendOutput AnalyticBackend::predict(Tape& tape, Var z_t, const PromptSpec& prompt,
                                       const Schedule& schedule, double t) const {
  const auto& e = lib_.entry(prompt.id);
  std::vector<std::pair<const Tensor*, double>> comps;
  for (size_t k = 0; k < e.prototypes.size(); ++k) comps.emplace_back(&e.prototypes[k], e.weights[k]);
  Var z0_hat = mixture_z0(tape, z_t, comps, schedule, t);

  BackendOutput out;
  out.z0_hat = z0_hat;
  out.prediction = prediction_from_z0(tape, z_t, z0_hat, schedule, t);
  out.raw_maps.stage = AttentionStage::Raw;
  out.raw_maps.entities = prompt.entities;
  Var z0_flat = tape.reshape(z0_hat, Shape{lib_.channels, static_cast<int64_t>(lib_.height) * lib_.width});
  // blob-mass normalization keeps map values on the probability scale the
  // downstream softmax sharpening expects
  double inv_mass = 1.0 / (2.0 * M_PI * lib_.blob_sigma * lib_.blob_sigma);
  for (int s : prompt.entities) {
    Var g = tape.leaf(Tensor(Shape{1, lib_.channels}, lib_.templates[static_cast<size_t>(s)].data()));
    Var m = tape.scale(tape.clamp_min(tape.matmul(g, z0_flat), 0.0), inv_mass);
    out.raw_maps.maps.push_back(tape.reshape(m, Shape{lib_.height, lib_.width}));
  }
  return out;
}

Var AnalyticBackend::predict_uncond(Tape& tape, Var z_t, const Schedule& schedule, double t) const {
  auto comps = lib_.unconditional();
  Var z0_hat = mixture_z0(tape, z_t, comps, schedule, t);
  return prediction_from_z0(tape, z_t, z0_hat, schedule, t);
}

std::vector<double> AnalyticBackend::posterior_weights(const Tensor& z_t, const std::string& prompt_id,
                                                       const Schedule& schedule, double t) const {
  const auto& e = lib_.entry(prompt_id);
  double at = schedule.a(t), bt = schedule.b(t);
  if (bt == 0.0) throw std::domain_error("posterior degenerate at b_t = 0");
  std::vector<double> logits;
  for (size_t k = 0; k < e.prototypes.size(); ++k) {
    double d2 = 0.0;
    const Tensor& m = e.prototypes[k];
    for (int64_t i = 0; i < m.size(); ++i) {
      double d = z_t[i] - at * m[i];
      d2 += d * d;
    }
    logits.push_back(std::log(e.weights[k]) - d2 / (2.0 * bt * bt));
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  for (double& l : logits) l /= z;
  return logits;
}

// ---------------------------------------------------------------------------
// Learned backend

namespace {

Tensor sinusoidal_time_embedding(double t, int d) {
  Tensor pe(Shape{d});
  for (int j = 0; j < d; ++j) {
    double freq = std::pow(10000.0, -static_cast<double>(j / 2 * 2) / d);
    pe[j] = j % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq);
  }
  return pe;
}

Tensor random_normal(const Shape& shape, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

}  // namespace

ToyBackendWeights ToyBackendWeights::init(int vocab_size, int channels, int height, int width,
                                          int d_model, std::mt19937_64& rng) {
  ToyBackendWeights w;
  w.vocab_size = vocab_size;
  w.channels = channels;
  w.height = height;
  w.width = width;
  w.d_model = d_model;
  int64_t d = d_model, c = channels, v = vocab_size;
  double sd = 1.0 / std::sqrt(static_cast<double>(d));
  w.names = {"token_embed", "patch_w", "patch_b", "q_w", "k_w", "v_w", "mlp1_w", "mlp1_b", "mlp2_w", "mlp2_b"};
  w.params["token_embed"] = random_normal(Shape{v + 1, d}, 0.5, rng);
  w.params["patch_w"] = random_normal(Shape{c, d}, 0.5, rng);
  w.params["patch_b"] = Tensor(Shape{d});
  w.params["q_w"] = random_normal(Shape{d, d}, sd, rng);
  w.params["k_w"] = random_normal(Shape{d, d}, sd, rng);
  w.params["v_w"] = random_normal(Shape{d, d}, sd, rng);
  w.params["mlp1_w"] = random_normal(Shape{d, d}, sd, rng);
  w.params["mlp1_b"] = Tensor(Shape{d});
  w.params["mlp2_w"] = Tensor(Shape{d, c});  // zero head: untrained prediction is 0
  w.params["mlp2_b"] = Tensor(Shape{c});
  return w;
}

BackendOutput LearnedBackend::forward(Tape& tape, Var z_t, const PromptSpec& prompt, double t,
                                      const ToyBackendWeights& meta,
                                      const std::map<std::string, Var>& params) {
  for (int e : prompt.entities) {
    if (e < 0 || e >= meta.vocab_size) throw std::invalid_argument("entity id outside backend vocabulary");
  }
  int64_t c = meta.channels, h = meta.height, w = meta.width, d = meta.d_model;
  int64_t hw = h * w;
  int64_t n_tok = prompt.entities.empty() ? 1 : static_cast<int64_t>(prompt.entities.size());

  Var zt_flat = tape.transpose2d(tape.reshape(z_t, Shape{c, hw}));  // hw x c
  Var x = tape.add(tape.matmul(zt_flat, params.at("patch_w")), params.at("patch_b"));
  x = tape.add(x, tape.leaf(sinusoidal_time_embedding(t, meta.d_model)));

  // Select prompt token embeddings (null token when unconditional).
  Tensor sel(Shape{n_tok, static_cast<int64_t>(meta.vocab_size) + 1});
  if (prompt.entities.empty()) {
    sel[meta.vocab_size] = 1.0;
  } else {
    for (int64_t i = 0; i < n_tok; ++i) sel[i * (meta.vocab_size + 1) + prompt.entities[static_cast<size_t>(i)]] = 1.0;
  }
  Var emb = tape.matmul(tape.leaf(sel), params.at("token_embed"));  // n_tok x d

  Var q = tape.matmul(x, params.at("q_w"));
  Var k = tape.matmul(emb, params.at("k_w"));
  Var v = tape.matmul(emb, params.at("v_w"));
  Var scores = tape.scale(tape.matmul(q, tape.transpose2d(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  Var attn = tape.softmax(scores, 1);  // hw x n_tok, rows sum to 1

  Var ctx = tape.matmul(attn, v);
  Var hid = tape.add(x, ctx);
  Var h1 = tape.clamp_min(tape.add(tape.matmul(hid, params.at("mlp1_w")), params.at("mlp1_b")), 0.0);
  Var out = tape.add(tape.matmul(h1, params.at("mlp2_w")), params.at("mlp2_b"));  // hw x c
  Var pred = tape.reshape(tape.transpose2d(out), Shape{c, h, w});

  BackendOutput bo;
  bo.prediction = pred;
  bo.z0_hat = Var{};  // filled by callers that need it via Schedule::estimate_z0
  bo.raw_maps.stage = AttentionStage::Raw;
  bo.raw_maps.entities = prompt.entities;
  for (int64_t s = 0; s < n_tok && !prompt.entities.empty(); ++s) {
    Tensor col(Shape{n_tok, 1});
    col[s] = 1.0;
    Var m = tape.reshape(tape.matmul(attn, tape.leaf(col)), Shape{h, w});
    bo.raw_maps.maps.push_back(m);
  }
  return bo;
}

BackendOutput LearnedBackend::predict(Tape& tape, Var z_t, const PromptSpec& prompt,
                                      const Schedule& schedule, double t) const {
  std::map<std::string, Var> params;
  for (const auto& name : w_.names) params[name] = tape.leaf(w_.params.at(name));
  BackendOutput out = forward(tape, z_t, prompt, t, w_, params);
  out.z0_hat = schedule.estimate_z0(tape, z_t, out.prediction, t);
  return out;
}

Var LearnedBackend::predict_uncond(Tape& tape, Var z_t, const Schedule& schedule, double t) const {
  (void)schedule;
  std::map<std::string, Var> params;
  for (const auto& name : w_.names) params[name] = tape.leaf(w_.params.at(name));
  PromptSpec uncond;
  uncond.id = "<uncond>";
  return forward(tape, z_t, uncond, t, w_, params).prediction;
}

TrainResult train_toy_backend(const PrototypeLibrary& dataset, const Schedule& schedule, int epochs,
                              double lr, int batch, uint64_t seed, int d_model) {
  std::vector<std::pair<const PromptSpec*, const Tensor*>> samples;
  for (const auto& [id, e] : dataset.prompts)
    for (const Tensor& proto : e.prototypes) samples.emplace_back(&e.prompt, &proto);
  if (samples.empty()) throw std::invalid_argument("train_toy_backend: empty dataset");

  std::mt19937_64 rng(seed);
  ToyBackendWeights w = ToyBackendWeights::init(dataset.vocab_size, dataset.channels, dataset.height,
                                                dataset.width, d_model, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> t_int(1, schedule.t_max());
  std::uniform_real_distribution<double> t_real(1e-6, static_cast<double>(schedule.t_max()));

  TrainResult result;
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int64_t n_seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(batch));
      Tape tape;
      std::map<std::string, Var> params;
      for (const auto& name : w.names) params[name] = tape.leaf(w.params.at(name));
      Var loss = tape.leaf(Tensor::scalar(0.0));
      for (size_t bi = start; bi < stop; ++bi) {
        const auto& [prompt, z0] = samples[order[bi]];
        double t = schedule.kind() == ScheduleKind::VpDiffusion ? static_cast<double>(t_int(rng))
                                                                : t_real(rng);
        Tensor eps(z0->shape());
        for (int64_t i = 0; i < eps.size(); ++i) eps[i] = normal(rng);
        Tensor z_t = schedule.diffuse(*z0, t, eps);
        Tensor target = schedule.kind() == ScheduleKind::VpDiffusion ? eps : t_sub(eps, *z0);
        BackendOutput out = LearnedBackend::forward(tape, tape.leaf(z_t), *prompt, t, w, params);
        loss = tape.add(loss, tape.sum(tape.square(tape.sub(out.prediction, tape.leaf(target)))));
      }
      double nb = static_cast<double>(stop - start);
      loss = tape.scale(loss, 1.0 / nb);
      double loss_v = tape.value(loss).item();
      if (!std::isfinite(loss_v)) {
        throw std::runtime_error("train_toy_backend: non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss_v * nb;
      n_seen += static_cast<int64_t>(stop - start);
      tape.backward(loss);
      for (const auto& name : w.names) {
        const Tensor& g = tape.grad(params[name]);
        if (g.size() == 0) continue;
        Tensor& p = w.params[name];
        for (int64_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
      }
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n_seen));
  }
  result.weights = std::move(w);
  return result;
}

// ---------------------------------------------------------------------------
// Attention preprocessing

Tensor gaussian_kernel3(double sigma) {
  Tensor k(Shape{3, 3});
  double sum = 0.0;
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j) {
      double v = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
      k[(i + 1) * 3 + (j + 1)] = v;
      sum += v;
    }
  for (int64_t i = 0; i < 9; ++i) k[i] /= sum;
  return k;
}

AttentionMaps preprocess_attention(Tape& tape, const AttentionMaps& raw) {
  if (raw.stage != AttentionStage::Raw) throw std::invalid_argument("preprocess_attention: maps already processed");
  Tensor kernel = gaussian_kernel3();
  AttentionMaps out;
  out.stage = AttentionStage::Preprocessed;
  out.entities = raw.entities;
  for (Var m : raw.maps) {
    Shape hw_shape = tape.value(m).shape();
    int64_t n = tape.value(m).size();
    Var s = tape.softmax(tape.reshape(tape.scale(m, 100.0), Shape{n}), 0);
    Var smooth = tape.conv2d_same(tape.reshape(s, hw_shape), kernel);
    // zero padding leaks mass at the border; divide by the local kernel mass
    // (uniform maps stay uniform) and renormalize to unit sum
    Tensor edge = t_conv2d_same(Tensor(hw_shape, 1.0), kernel);
    Var corrected = tape.div(smooth, tape.leaf(edge));
    Var renorm = tape.div(corrected, tape.sum(corrected));
    out.maps.push_back(renorm);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", t.data()}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

json prompt_to_json(const PromptSpec& p) {
  json j{{"id", p.id}, {"entities", p.entities}};
  if (!p.boxes.empty()) j["boxes"] = p.boxes;
  return j;
}

PromptSpec prompt_from_json(const json& j) {
  PromptSpec p;
  p.id = j.at("id").get<std::string>();
  p.entities = j.at("entities").get<std::vector<int>>();
  if (j.contains("boxes")) p.boxes = j.at("boxes").get<std::vector<Box>>();
  return p;
}

}  // namespace

std::string PrototypeLibrary::to_json() const {
  json j;
  j["schema"] = 1;
  j["kind"] = "prototype-library";
  j["vocab_size"] = vocab_size;
  j["channels"] = channels;
  j["height"] = height;
  j["width"] = width;
  j["blob_sigma"] = blob_sigma;
  j["templates"] = json::array();
  for (const Tensor& t : templates) j["templates"].push_back(tensor_to_json(t));
  j["prompts"] = json::array();
  for (const auto& [id, e] : prompts) {
    json je;
    je["prompt"] = prompt_to_json(e.prompt);
    je["weights"] = e.weights;
    je["centers"] = e.centers;
    je["prototypes"] = json::array();
    for (const Tensor& p : e.prototypes) je["prototypes"].push_back(tensor_to_json(p));
    j["prompts"].push_back(je);
  }
  return j.dump();
}

PrototypeLibrary PrototypeLibrary::from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.at("schema").get<int>() != 1 || j.at("kind") != "prototype-library") {
    throw std::invalid_argument("not a schema-1 prototype library");
  }
  PrototypeLibrary lib;
  lib.vocab_size = j.at("vocab_size").get<int>();
  lib.channels = j.at("channels").get<int>();
  lib.height = j.at("height").get<int>();
  lib.width = j.at("width").get<int>();
  lib.blob_sigma = j.at("blob_sigma").get<double>();
  for (const json& t : j.at("templates")) lib.templates.push_back(tensor_from_json(t));
  for (const json& je : j.at("prompts")) {
    PromptEntry e;
    e.prompt = prompt_from_json(je.at("prompt"));
    e.weights = je.at("weights").get<std::vector<double>>();
    e.centers = je.at("centers").get<std::vector<std::vector<std::pair<double, double>>>>();
    for (const json& p : je.at("prototypes")) e.prototypes.push_back(tensor_from_json(p));
    lib.prompts.emplace(e.prompt.id, std::move(e));
  }
  return lib;
}

std::string ToyBackendWeights::to_json() const {
  json j;
  j["schema"] = 1;
  j["kind"] = "toy-backend-weights";
  j["vocab_size"] = vocab_size;
  j["channels"] = channels;
  j["height"] = height;
  j["width"] = width;
  j["d_model"] = d_model;
  for (const auto& name : names) j["params"][name] = tensor_to_json(params.at(name));
  j["names"] = names;
  return j.dump();
}

ToyBackendWeights ToyBackendWeights::from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.at("schema").get<int>() != 1 || j.at("kind") != "toy-backend-weights") {
    throw std::invalid_argument("not schema-1 toy backend weights");
  }
  ToyBackendWeights w;
  w.vocab_size = j.at("vocab_size").get<int>();
  w.channels = j.at("channels").get<int>();
  w.height = j.at("height").get<int>();
  w.width = j.at("width").get<int>();
  w.d_model = j.at("d_model").get<int>();
  w.names = j.at("names").get<std::vector<std::string>>();
  for (const auto& name : w.names) w.params[name] = tensor_from_json(j.at("params").at(name));
  return w;
}

}  // namespace saga
