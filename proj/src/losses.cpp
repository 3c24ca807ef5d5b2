// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#include "ksp/losses.hpp"

#include <cmath>

namespace ksp {

torch::Tensor soft_probs(const torch::Tensor& logits, double temperature) {
  return torch::sigmoid(logits / temperature).clamp(kProbEps, 1.0 - kProbEps);
}

torch::Tensor bernoulli_kl(const torch::Tensor& a, const torch::Tensor& b) {
  return a * (torch::log(a) - torch::log(b)) + (1 - a) * (torch::log1p(-a) - torch::log1p(-b));
}

torch::Tensor kl_distill(const torch::Tensor& p_logits, const torch::Tensor& w_logits,
                         double temperature, KLDirection direction) {
  TORCH_CHECK(p_logits.sizes() == w_logits.sizes(), "kl_distill: logit shapes differ");
  TORCH_CHECK(p_logits.dim() == 2, "kl_distill: expected [batch, U] logits");
  const auto batch = p_logits.size(0);
  if (batch <= 0) throw ConfigError("kl_distill: batch size must be positive");

  const auto q = soft_probs(((p_logits + w_logits) / 2).detach(), temperature);
  const auto p = soft_probs(p_logits, temperature);
  const auto w = soft_probs(w_logits, temperature);
  torch::Tensor kl;
  if (direction == KLDirection::kTargetToModel) {
    kl = bernoulli_kl(q, p) + bernoulli_kl(q, w);
  } else {
    kl = bernoulli_kl(p, q) + bernoulli_kl(w, q);
  }
  return kl.sum() * (temperature * temperature) / static_cast<double>(batch);
}

torch::Tensor weighted_bce_per_sample(const torch::Tensor& logits, const torch::Tensor& targets,
                                      const torch::Tensor& weights) {
  TORCH_CHECK(logits.sizes() == targets.sizes(), "weighted_bce: logits/targets shape mismatch");
  TORCH_CHECK(weights.dim() == 1 && weights.size(0) == logits.size(-1),
              "weighted_bce: weights must have one entry per AU");
  const auto prob = torch::sigmoid(logits).clamp(kProbEps, 1.0 - kProbEps);
  const auto loss = -(weights * targets * torch::log(prob) + (1 - targets) * torch::log1p(-prob));
  return loss.mean(-1);
}

torch::Tensor weighted_bce(const torch::Tensor& logits, const torch::Tensor& targets,
                           const torch::Tensor& weights) {
  return weighted_bce_per_sample(logits, targets, weights).mean();
}

torch::Tensor composite_supervised(const torch::Tensor& first, const torch::Tensor& second,
                                   const torch::Tensor& targets, const torch::Tensor& weights,
                                   double alpha, const torch::Tensor& kl_term) {
  return weighted_bce(first, targets, weights) + weighted_bce(second, targets, weights) +
         alpha * kl_term;
}

torch::Tensor pseudo_bce_per_clip(const torch::Tensor& logits, const torch::Tensor& pseudo_labels,
                                  const torch::Tensor& weights) {
  TORCH_CHECK(logits.dim() == 3, "pseudo_bce: expected [batch, positions, U] logits");
  return weighted_bce_per_sample(logits, pseudo_labels, weights).sum(1);
}

torch::Tensor pseudo_bce(const torch::Tensor& logits, const torch::Tensor& pseudo_labels,
                         const torch::Tensor& weights) {
  return pseudo_bce_per_clip(logits, pseudo_labels, weights).mean();
}

double ramp_weight(int x, double omega, double mu, double sigma, int warmup_epochs) {
  if (sigma == 0.0) throw ConfigError("ramp_weight: sigma must be non-zero");
  if (x < 0) throw ConfigError("ramp_weight: negative epoch");
  if (x >= warmup_epochs) return 1.0;
  const double d = (x - mu) / sigma;
  return std::min(1.0, std::exp(-omega * (1.0 - d * d)));
}

double ramp_weight(int x, const HyperParams& hp) {
  return ramp_weight(x, hp.ramp_omega, hp.ramp_mu, hp.ramp_sigma, hp.warmup_epochs);
}

TotalLoss total_loss(const LossTerms& terms, const HyperParams& hp,
                     const std::vector<bool>& semi_mask, int epoch, double w_ramp) {
  const auto batch = terms.semi_per_clip.size(0);
  TORCH_CHECK(static_cast<std::int64_t>(semi_mask.size()) == batch,
              "total_loss: one mask entry per clip required");
  std::vector<double> m(batch, 0.0);
  if (epoch >= hp.tpl_start_epoch)
    for (std::int64_t i = 0; i < batch; ++i) m[i] = semi_mask[i] ? 1.0 : 0.0;
  const auto mask = torch::tensor(m, torch::TensorOptions().dtype(torch::kFloat64))
                        .to(terms.semi_per_clip.options());

  TotalLoss out;
  out.semi_per_clip = terms.semi_per_clip * mask;
  const auto semi = batch > 0 ? out.semi_per_clip.sum() / static_cast<double>(batch)
                              : torch::zeros({}, terms.semi_per_clip.options());
  out.total = hp.lambda1 * terms.s +
              w_ramp * (terms.bce_ensemble + hp.lambda2 * terms.t + hp.lambda3 * terms.ssl +
                        hp.lambda4 * semi);

  auto& b = out.breakdown;
  b.skd = terms.skd.item<double>();
  b.tkd = terms.tkd.item<double>();
  b.bce_ensemble = terms.bce_ensemble.item<double>();
  b.s = terms.s.item<double>();
  b.t = terms.t.item<double>();
  b.ssl = terms.ssl.item<double>();
  b.semi = semi.item<double>();
  b.w_ramp = w_ramp;
  b.total = out.total.item<double>();
  return out;
}

}  // namespace ksp
