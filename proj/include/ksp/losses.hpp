// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#pragma once

#include <torch/torch.h>

#include "ksp/core.hpp"

namespace ksp {

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-7;

/// Per-AU Bernoulli probabilities sigmoid(logits / T), clamped.
torch::Tensor soft_probs(const torch::Tensor& logits, double temperature);

/// Elementwise KL(a || b) between Bernoulli distributions with P(1) = a, b.
torch::Tensor bernoulli_kl(const torch::Tensor& a, const torch::Tensor& b);

/// Online distillation of two logit sets [b, U] toward their detached mean:
/// T^2 / b * sum over batch and AUs of KL(q || p) + KL(q || w).
torch::Tensor kl_distill(const torch::Tensor& p_logits, const torch::Tensor& w_logits,
                         double temperature,
                         KLDirection direction = KLDirection::kTargetToModel);

/// Weighted BCE with logits, averaged over AUs; returns one value per row.
/// `weights` ([U]) scales the positive term only.
torch::Tensor weighted_bce_per_sample(const torch::Tensor& logits, const torch::Tensor& targets,
                                      const torch::Tensor& weights);

/// Batch mean of weighted_bce_per_sample.
torch::Tensor weighted_bce(const torch::Tensor& logits, const torch::Tensor& targets,
                           const torch::Tensor& weights);

/// BCE of two logit sets against the same label plus alpha times a KL term.
torch::Tensor composite_supervised(const torch::Tensor& first, const torch::Tensor& second,
                                   const torch::Tensor& targets, const torch::Tensor& weights,
                                   double alpha, const torch::Tensor& kl_term);

/// Logits and pseudo labels [b, n-1, U]; sum over positions per clip -> [b].
torch::Tensor pseudo_bce_per_clip(const torch::Tensor& logits, const torch::Tensor& pseudo_labels,
                                  const torch::Tensor& weights);
torch::Tensor pseudo_bce(const torch::Tensor& logits, const torch::Tensor& pseudo_labels,
                         const torch::Tensor& weights);

/// Gaussian warm-up weight for epoch index x (0-based).
double ramp_weight(int x, double omega, double mu, double sigma, int warmup_epochs);
double ramp_weight(int x, const HyperParams& hp);

struct LossBreakdown {
  double skd = 0.0;
  double tkd = 0.0;
  double bce_ensemble = 0.0;
  double s = 0.0;
  double t = 0.0;
  double ssl = 0.0;
  double semi = 0.0;
  double w_ramp = 0.0;
  double total = 0.0;
};

/// Inputs of the total loss for one batch. Scalars except semi_per_clip ([b]).
struct LossTerms {
  torch::Tensor skd;
  torch::Tensor tkd;
  torch::Tensor bce_ensemble;
  torch::Tensor s;
  torch::Tensor t;
  torch::Tensor ssl;
  torch::Tensor semi_per_clip;
};

struct TotalLoss {
  torch::Tensor total;
  /// Per-clip L_semi after gating; exactly zero where gated off.
  torch::Tensor semi_per_clip;
  LossBreakdown breakdown;
};

/// lambda1 * L_s + w_ramp * (L_bce + lambda2 * L_t + lambda3 * L_ssl + lambda4 * L_semi).
/// L_semi is the batch mean of the per-clip terms with clips zeroed where
/// `semi_mask` is false, and entirely zero before hp.tpl_start_epoch.
TotalLoss total_loss(const LossTerms& terms, const HyperParams& hp,
                     const std::vector<bool>& semi_mask, int epoch, double w_ramp);

}  // namespace ksp
