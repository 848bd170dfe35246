// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <vector>

#include "saga/backend.hpp"
#include "saga/tensor.hpp"

namespace saga {

enum class CriterionKind { Combined, L1Only, L2Only, BboxCombined };

struct CriterionConfig {
  CriterionKind kind = CriterionKind::Combined;
  std::vector<Box> boxes;  // required for BboxCombined, keyed by subject order
  void validate(size_t n_subjects) const;
};

/// max over subjects of (1 - max position of M^s); in [0, 1].
Var loss_l1(Tape& tape, const AttentionMaps& maps);

/// mean over unordered subject pairs of sum(min(M^m, M^n)) / sum(M^m + M^n);
/// in [0, 0.5].
Var loss_l2(Tape& tape, const AttentionMaps& maps);

/// mean over subjects of 1 - sum(min(B^m, M^m)) / sum(B^m + M^m), with B^m
/// the 0/1 box mask.
Var loss_bbox(Tape& tape, const AttentionMaps& maps, const std::vector<Box>& boxes);

/// (L1 + L2-or-bbox) / 2; single-subject prompts degrade to L1 alone.
Var loss_combined(Tape& tape, const AttentionMaps& maps, const CriterionConfig& config);

Tensor box_mask(const Box& box, int height, int width);

}  // namespace saga
