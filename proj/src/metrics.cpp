// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#include "ksp/metrics.hpp"

namespace ksp {

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

F1Report f1_scores(const std::vector<AULabelVector>& predictions,
                   const std::vector<AULabelVector>& ground_truth) {
  if (predictions.size() != ground_truth.size())
    throw DataError("f1_scores: predictions and ground truth differ in length");
  F1Report r;
  if (predictions.empty()) return r;
  const std::size_t num_aus = ground_truth.front().size();
  r.true_positives.assign(num_aus, 0);
  r.false_positives.assign(num_aus, 0);
  r.false_negatives.assign(num_aus, 0);
  r.support.assign(num_aus, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& y = ground_truth[i];
    if (p.size() != num_aus || y.size() != num_aus)
      throw DataError("f1_scores: label vectors differ in width");
    for (std::size_t u = 0; u < num_aus; ++u) {
      const bool pp = p[u] != 0, yy = y[u] != 0;
      r.support[u] += yy;
      r.true_positives[u] += pp && yy;
      r.false_positives[u] += pp && !yy;
      r.false_negatives[u] += !pp && yy;
    }
  }
  r.per_au_f1.resize(num_aus);
  double sum = 0.0;
  for (std::size_t u = 0; u < num_aus; ++u) {
    r.per_au_f1[u] = f1_from_counts(r.true_positives[u], r.false_positives[u], r.false_negatives[u]);
    sum += r.per_au_f1[u];
  }
  r.macro_f1 = sum / static_cast<double>(num_aus);
  return r;
}

}  // namespace ksp
