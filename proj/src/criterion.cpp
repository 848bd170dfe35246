// SPDX-License-Identifier: Apache-2.0
#include "saga/criterion.hpp"

#include <stdexcept>

namespace saga {

namespace {

void require_preprocessed(const AttentionMaps& maps) {
  if (maps.stage != AttentionStage::Preprocessed) {
    throw std::invalid_argument("criterion requires preprocessed attention maps");
  }
}

}  // namespace

void CriterionConfig::validate(size_t n_subjects) const {
  if (kind == CriterionKind::BboxCombined && boxes.size() != n_subjects) {
    throw std::invalid_argument("bbox criterion requires one box per subject");
  }
}

Tensor box_mask(const Box& box, int height, int width) {
  Tensor m(Shape{height, width});
  for (int i = box[1]; i < box[3]; ++i)
    for (int j = box[0]; j < box[2]; ++j) m[static_cast<int64_t>(i) * width + j] = 1.0;
  return m;
}

Var loss_l1(Tape& tape, const AttentionMaps& maps) {
  require_preprocessed(maps);
  if (maps.maps.empty()) throw std::invalid_argument("loss_l1: empty subject set");
  std::vector<Var> deficits;
  for (Var m : maps.maps) {
    deficits.push_back(tape.sub(tape.leaf(Tensor::scalar(1.0)), tape.max_all(m)));
  }
  return tape.max_all(tape.stack_scalars(deficits));
}

Var loss_l2(Tape& tape, const AttentionMaps& maps) {
  require_preprocessed(maps);
  size_t n = maps.maps.size();
  if (n < 2) throw std::invalid_argument("loss_l2: needs at least 2 subjects");
  std::vector<Var> pair_terms;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      Var overlap = tape.sum(tape.minimum(maps.maps[i], maps.maps[j]));
      Var denom = tape.sum(tape.add(maps.maps[i], maps.maps[j]));
      pair_terms.push_back(tape.div(overlap, denom));
    }
  return tape.mean(tape.stack_scalars(pair_terms));
}

Var loss_bbox(Tape& tape, const AttentionMaps& maps, const std::vector<Box>& boxes) {
  require_preprocessed(maps);
  if (boxes.size() != maps.maps.size()) throw std::invalid_argument("loss_bbox: missing box for a subject");
  std::vector<Var> terms;
  for (size_t i = 0; i < maps.maps.size(); ++i) {
    const Shape& s = tape.value(maps.maps[i]).shape();
    Var mask = tape.leaf(box_mask(boxes[i], static_cast<int>(s[0]), static_cast<int>(s[1])));
    Var overlap = tape.sum(tape.minimum(mask, maps.maps[i]));
    Var denom = tape.sum(tape.add(mask, maps.maps[i]));
    terms.push_back(tape.sub(tape.leaf(Tensor::scalar(1.0)), tape.div(overlap, denom)));
  }
  return tape.mean(tape.stack_scalars(terms));
}

Var loss_combined(Tape& tape, const AttentionMaps& maps, const CriterionConfig& config) {
  require_preprocessed(maps);
  config.validate(maps.maps.size());
  Var l1 = loss_l1(tape, maps);
  switch (config.kind) {
    case CriterionKind::L1Only:
      return l1;
    case CriterionKind::L2Only:
      return loss_l2(tape, maps);
    case CriterionKind::Combined:
      // overlap is vacuous for a single subject; L degrades to L1
      if (maps.maps.size() < 2) return l1;
      return tape.scale(tape.add(l1, loss_l2(tape, maps)), 0.5);
    case CriterionKind::BboxCombined:
      return tape.scale(tape.add(l1, loss_bbox(tape, maps, config.boxes)), 0.5);
  }
  throw std::logic_error("unreachable criterion kind");
}

}  // namespace saga
