// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "saga/backend.hpp"
#include "saga/sampler.hpp"

namespace saga {

/// One detected entity blob: matched-filter peak with sub-cell centroid.
struct Detection {
  int entity = -1;
  double row = 0.0, col = 0.0;
  double score = 0.0;
};

/// Peak response of the matched filter on a clean single blob; detection
/// threshold is `scale` times this value.
double clean_self_response(const PrototypeLibrary& lib);

/// Correlate z0 (C x H x W) against each entity's channel signature and blob
/// profile, then report local maxima (3x3 non-maximum suppression) whose
/// response clears scale * clean_self_response.
std::vector<Detection> detect_entities(const Tensor& z0, const PrototypeLibrary& lib,
                                       const std::vector<int>& entities, double scale = 0.5);

/// Fraction of records whose latent contains every prompt entity at least
/// once. Throws on empty input.
double tiam_score(const std::vector<GenerationRecord>& records, const PrototypeLibrary& lib,
                  double scale = 0.5);

/// Per entity: 1 if the best detection's centroid falls inside the prompt's
/// box, else 0 (undetected counts 0). Mean over entities and records. Throws
/// if any record's prompt carries no boxes.
double box_alignment(const std::vector<GenerationRecord>& records, const PrototypeLibrary& lib,
                     double scale = 0.5);

struct DiversityResult {
  double mean_distance = 0.0;  // mean over pairs of mean matched-centroid distance
  double pair_coverage = 0.0;  // fraction of pairs where every entity matched
};

/// Layout spread within one prompt's group of records. Pairs with any entity
/// undetected in either image are skipped and reflected in pair_coverage.
/// Throws on groups smaller than 2.
DiversityResult layout_diversity(const std::vector<GenerationRecord>& group,
                                 const PrototypeLibrary& lib, double scale = 0.5);

struct SaturationStats {
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  double frac_outliers = 0.0;  // fraction of entries beyond +-3 sigma_ref
};

SaturationStats saturation_stats(const Tensor& t, double sigma_ref);

}  // namespace saga
