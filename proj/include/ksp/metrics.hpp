// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#pragma once

#include <cstddef>
#include <vector>

#include "ksp/core.hpp"

namespace ksp {

struct F1Report {
  std::vector<double> per_au_f1;
  double macro_f1 = 0.0;
  /// Positive ground-truth count per AU.
  std::vector<std::size_t> support;
  std::vector<std::size_t> true_positives;
  std::vector<std::size_t> false_positives;
  std::vector<std::size_t> false_negatives;
};

/// Per-AU F1 = 2PR / (P + R), with 0/0 -> 0; macro = unweighted mean.
F1Report f1_scores(const std::vector<AULabelVector>& predictions,
                   const std::vector<AULabelVector>& ground_truth);

/// F1 from raw counts (0 when tp == 0).
double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

}  // namespace ksp
