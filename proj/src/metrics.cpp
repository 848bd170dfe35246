// SPDX-License-Identifier: Apache-2.0
#include "saga/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>

namespace saga {

namespace {

Tensor blob_kernel(double sigma) {
  int r = static_cast<int>(std::ceil(2.0 * sigma));
  int n = 2 * r + 1;
  Tensor k(Shape{n, n});
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double d2 = (i - r) * static_cast<double>(i - r) + (j - r) * static_cast<double>(j - r);
      k[static_cast<int64_t>(i) * n + j] = std::exp(-d2 * inv2s2);
    }
  return k;
}

Tensor response_map(const Tensor& z0, const PrototypeLibrary& lib, int entity) {
  int C = lib.channels, H = lib.height, W = lib.width;
  if (z0.shape() != Shape{C, H, W}) throw std::invalid_argument("latent shape mismatch");
  const Tensor& g = lib.templates[static_cast<size_t>(entity)];
  Tensor proj(Shape{H, W});
  for (int c = 0; c < C; ++c)
    for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i)
      proj[i] += g[c] * z0[c * H * W + i];
  return t_conv2d_same(proj, blob_kernel(lib.blob_sigma));
}

std::optional<Detection> best_detection(const std::vector<Detection>& dets, int entity) {
  std::optional<Detection> best;
  for (const Detection& d : dets) {
    if (d.entity != entity) continue;
    if (!best || d.score > best->score) best = d;
  }
  return best;
}

}  // namespace

double clean_self_response(const PrototypeLibrary& lib) {
  // unit-norm channel signature, so the peak response is the blob's overlap
  // with the truncated kernel
  Tensor k = blob_kernel(lib.blob_sigma);
  double acc = 0.0;
  for (int64_t i = 0; i < k.size(); ++i) acc += k[i] * k[i];
  return acc;
}

std::vector<Detection> detect_entities(const Tensor& z0, const PrototypeLibrary& lib,
                                       const std::vector<int>& entities, double scale) {
  int H = lib.height, W = lib.width;
  double threshold = scale * clean_self_response(lib);
  std::vector<Detection> out;
  for (int entity : entities) {
    if (entity < 0 || entity >= lib.vocab_size) throw std::invalid_argument("entity id out of range");
    Tensor r = response_map(z0, lib, entity);
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double v = r[static_cast<int64_t>(i) * W + j];
        if (v < threshold) continue;
        bool peak = true;
        for (int di = -1; di <= 1 && peak; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            int ni = i + di, nj = j + dj;
            if ((di == 0 && dj == 0) || ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
            if (r[static_cast<int64_t>(ni) * W + nj] > v) { peak = false; break; }
          }
        if (!peak) continue;
        double wsum = 0.0, rsum = 0.0, csum = 0.0;
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            int ni = i + di, nj = j + dj;
            if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
            double w = std::max(r[static_cast<int64_t>(ni) * W + nj], 0.0);
            wsum += w;
            rsum += w * ni;
            csum += w * nj;
          }
        Detection d;
        d.entity = entity;
        d.score = v;
        d.row = wsum > 0 ? rsum / wsum : i;
        d.col = wsum > 0 ? csum / wsum : j;
        out.push_back(d);
      }
  }
  return out;
}

double tiam_score(const std::vector<GenerationRecord>& records, const PrototypeLibrary& lib,
                  double scale) {
  if (records.empty()) throw std::invalid_argument("tiam_score needs at least one record");
  int hits = 0;
  for (const GenerationRecord& rec : records) {
    const auto& prompt = lib.entry(rec.prompt_id).prompt;
    auto dets = detect_entities(rec.z0, lib, prompt.entities, scale);
    bool all = true;
    for (int e : prompt.entities)
      if (!best_detection(dets, e)) { all = false; break; }
    hits += all ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double box_alignment(const std::vector<GenerationRecord>& records, const PrototypeLibrary& lib,
                     double scale) {
  if (records.empty()) throw std::invalid_argument("box_alignment needs at least one record");
  int64_t total = 0;
  double acc = 0.0;
  for (const GenerationRecord& rec : records) {
    const auto& prompt = lib.entry(rec.prompt_id).prompt;
    if (prompt.boxes.size() != prompt.entities.size())
      throw std::invalid_argument("prompt " + prompt.id + " carries no boxes");
    auto dets = detect_entities(rec.z0, lib, prompt.entities, scale);
    for (size_t ei = 0; ei < prompt.entities.size(); ++ei) {
      ++total;
      auto d = best_detection(dets, prompt.entities[ei]);
      if (!d) continue;
      const Box& b = prompt.boxes[ei];
      if (d->col >= b[0] && d->col < b[2] && d->row >= b[1] && d->row < b[3]) acc += 1.0;
    }
  }
  return acc / static_cast<double>(total);
}

DiversityResult layout_diversity(const std::vector<GenerationRecord>& group,
                                 const PrototypeLibrary& lib, double scale) {
  if (group.size() < 2) throw std::invalid_argument("diversity needs a group of >= 2 records");
  const auto& prompt = lib.entry(group.front().prompt_id).prompt;
  for (const GenerationRecord& rec : group)
    if (rec.prompt_id != group.front().prompt_id)
      throw std::invalid_argument("diversity group mixes prompts");

  // per record: best centroid per entity, or missing
  std::vector<std::map<int, std::pair<double, double>>> layouts;
  for (const GenerationRecord& rec : group) {
    auto dets = detect_entities(rec.z0, lib, prompt.entities, scale);
    std::map<int, std::pair<double, double>> layout;
    for (int e : prompt.entities) {
      auto d = best_detection(dets, e);
      if (d) layout[e] = {d->row, d->col};
    }
    layouts.push_back(std::move(layout));
  }

  int64_t pairs = 0, matched = 0;
  double acc = 0.0;
  for (size_t i = 0; i < layouts.size(); ++i)
    for (size_t j = i + 1; j < layouts.size(); ++j) {
      ++pairs;
      double dist = 0.0;
      bool all = true;
      for (int e : prompt.entities) {
        auto a = layouts[i].find(e);
        auto b = layouts[j].find(e);
        if (a == layouts[i].end() || b == layouts[j].end()) { all = false; break; }
        double dr = a->second.first - b->second.first;
        double dc = a->second.second - b->second.second;
        dist += std::sqrt(dr * dr + dc * dc);
      }
      if (!all) continue;
      ++matched;
      acc += dist / static_cast<double>(prompt.entities.size());
    }
  DiversityResult out;
  out.pair_coverage = static_cast<double>(matched) / static_cast<double>(pairs);
  out.mean_distance = matched > 0 ? acc / static_cast<double>(matched) : 0.0;
  return out;
}

SaturationStats saturation_stats(const Tensor& t, double sigma_ref) {
  if (!(sigma_ref > 0.0)) throw std::invalid_argument("sigma_ref must be positive");
  if (t.size() == 0) throw std::invalid_argument("empty tensor");
  SaturationStats s;
  s.min = t[0];
  s.max = t[0];
  double mean = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) {
    mean += t[i];
    s.min = std::min(s.min, t[i]);
    s.max = std::max(s.max, t[i]);
  }
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  int64_t beyond = 0;
  for (int64_t i = 0; i < t.size(); ++i) {
    var += (t[i] - mean) * (t[i] - mean);
    if (std::abs(t[i]) > 3.0 * sigma_ref) ++beyond;
  }
  s.std = std::sqrt(var / static_cast<double>(t.size()));
  s.frac_outliers = static_cast<double>(beyond) / static_cast<double>(t.size());
  return s;
}

}  // namespace saga
