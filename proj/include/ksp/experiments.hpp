// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ksp/core.hpp"
#include "ksp/metrics.hpp"
#include "ksp/synthdata.hpp"
#include "ksp/trainer.hpp"

namespace ksp {

/// Trains on a sparsely labeled corpus and returns the held-out report.
using ModelFactory =
    std::function<TrainReport(const LabeledCorpus& labeled, const ExperimentConfig& cfg)>;

/// train() with no sinks.
ModelFactory default_factory();

struct SweepRow {
  double ratio = 0.0;
  SampleMode mode = SampleMode::kStrided;
  std::size_t label_count = 0;
  double macro_f1 = 0.0;
};

/// One training run per (ratio, mode). Ratio 1.0 is always added as the
/// ceiling row (once, strided).
std::vector<SweepRow> label_budget_sweep(const LabeledCorpus& corpus, const ExperimentConfig& cfg,
                                         std::vector<double> ratios,
                                         const std::vector<SampleMode>& modes,
                                         const ModelFactory& factory = default_factory());
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct AblationRow {
  std::string variant;  // full, KSM+TPL, SIL+TPL, SIL+KSM, baseline
  Ablation ablation = Ablation::kNone;
  std::vector<std::uint64_t> seeds;
  std::vector<double> macro_f1;
  std::vector<double> pseudo_accuracy;
  double median_f1 = 0.0;
};

/// Every variant at `label_ratio` (strided), once per seed.
std::vector<AblationRow> ablation_table(const LabeledCorpus& corpus, const ExperimentConfig& cfg,
                                        double label_ratio, const std::vector<std::uint64_t>& seeds,
                                        const ModelFactory& factory = default_factory());
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string variant_name(Ablation a);

struct ClipLengthRow {
  int clip_len = 0;
  std::vector<double> macro_f1;
  double median_f1 = 0.0;
};

std::vector<ClipLengthRow> clip_length_sweep(const LabeledCorpus& corpus,
                                             const ExperimentConfig& cfg,
                                             const std::vector<int>& clip_lengths,
                                             const std::vector<std::uint64_t>& seeds,
                                             const ModelFactory& factory = default_factory());

/// Median; the mean of the middle pair for even sizes. Empty -> 0.
double median(std::vector<double> v);

}  // namespace ksp
