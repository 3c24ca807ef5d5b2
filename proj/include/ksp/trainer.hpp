// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#pragma once

#include <torch/torch.h>

#include <atomic>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ksp/core.hpp"
#include "ksp/losses.hpp"
#include "ksp/metrics.hpp"
#include "ksp/models.hpp"
#include "ksp/synthdata.hpp"

namespace ksp {

enum class TplVerdict { kAccepted, kRejected, kInactive };
std::string to_string(TplVerdict v);

struct PseudoLabelRecord {
  std::int64_t clip_id = 0;
  int position = 0;
  AULabelVector y_hat;
  std::vector<double> confidences;
  TplVerdict tpl_verdict = TplVerdict::kInactive;
  std::optional<AULabelVector> ground_truth;
};

/// y_hat_u = 1 iff sigmoid(logit_u) >= 0.5. Rows of `logits` ([m, U]) map to
/// `positions`; clip_id and verdict are left for the caller.
std::vector<PseudoLabelRecord> generate_pseudo_labels(const torch::Tensor& logits,
                                                      const std::vector<int>& positions = {});

/// Hard pseudo-label tensor with the same threshold, detached.
torch::Tensor pseudo_label_targets(const torch::Tensor& logits);

/// Uniformly random non-identity permutation of [0, n).
std::vector<int> shuffle_permutation(int n, std::mt19937_64& rng);

/// Reorders the n token rows of `tokens` ([n, W]) by a random non-identity permutation.
torch::Tensor shuffle_features(const torch::Tensor& tokens, std::mt19937_64& rng);

/// Inactive before `start_epoch`; then accepted iff sigmoid(logit) < 0.5.
TplVerdict tpl_gate(double ssl_logit, int epoch, int start_epoch = 3);

enum class Ablation { kNone, kNoSil, kNoKsm, kNoTpl, kBaseline };
std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);
/// none = full model; no-sil = MLP token mixers; no-ksm = lambda1 = lambda2 = 0;
/// no-tpl = lambda3 = 0 and no gating; baseline = every lambda and alpha 0.
ExperimentConfig apply_ablation(ExperimentConfig cfg, Ablation a);

struct StepResult {
  LossBreakdown losses;
  std::int64_t batch_index = 0;
  int key_pos = 0;
  std::vector<PseudoLabelRecord> pseudo_labels;
  std::vector<TplVerdict> verdicts;
  /// Each clip's contribution to L_semi after gating.
  std::vector<double> semi_per_clip;
  std::size_t tpl_correct = 0;
  std::size_t tpl_total = 0;
  std::vector<AULabelVector> predictions;
  std::vector<AULabelVector> targets;
};

/// Owns the model, the optimizer and the run state; executes one
/// knowledge-spreading step per batch.
class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, std::vector<double> pos_weights);

  /// Every clip must carry key_pos == key_frame_position(state().batch_counter, n).
  StepResult training_step(const std::vector<ClipSample>& batch);
  /// Step on clips without a visible label: only L_ssl and L_semi over all n positions.
  StepResult unlabeled_step(const std::vector<ClipSample>& batch);

  void set_epoch(int epoch) { state_.epoch = epoch; }
  [[nodiscard]] int scheduled_key_pos() const;

  KnowledgeSpreader& model() { return model_; }
  [[nodiscard]] const RunState& state() const { return state_; }
  [[nodiscard]] const ExperimentConfig& config() const { return cfg_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  struct Inputs {
    torch::Tensor key_images;
    torch::Tensor clip;
    torch::Tensor targets;
  };
  Inputs make_inputs(const std::vector<ClipSample>& batch, bool augment);
  void clip_gradients();

  ExperimentConfig cfg_;
  RunState state_;
  KnowledgeSpreader model_{nullptr};
  std::unique_ptr<torch::optim::SGD> optimizer_;
  torch::Tensor weights_;
  std::mt19937_64 rng_;
};

struct EpochMetrics {
  int epoch = 0;
  double w_ramp = 0.0;
  double train_f1 = 0.0;
  double val_f1 = 0.0;
  double tpl_train_accuracy = 0.0;
  double tpl_val_accuracy = 0.0;
  std::size_t pseudo_generated = 0;
  std::size_t pseudo_accepted = 0;
  std::size_t pseudo_rejected = 0;
  double pseudo_acceptance_rate = 0.0;
  /// Accuracy (per AU) of the pseudo labels that entered L_semi.
  double pseudo_accuracy = 0.0;
  /// Accuracy of every generated pseudo label, gated or not.
  double pseudo_accuracy_all = 0.0;
  LossBreakdown mean_losses;
  std::int64_t steps = 0;
};

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  F1Report final_val;
  std::int64_t total_steps = 0;
  bool interrupted = false;
  /// Accepted-label accuracy pooled over every gated epoch.
  double pseudo_accuracy = 0.0;
  double pseudo_acceptance_rate = 0.0;
};

struct TrainResult {
  KnowledgeSpreader model{nullptr};
  RunState state;
  TrainReport report;
};

/// Run directory outputs; all optional.
struct TrainSinks {
  std::string run_dir;  // metrics.csv, events.jsonl, epoch_<E>.ckpt, report.json
  bool quiet = true;
};

/// Splits sequence indices into (train, validation) by sequence: the last
/// round(S * val_fraction) sequences are held out (at least one when the
/// fraction is positive, never all of them).
std::pair<std::vector<int>, std::vector<int>> split_sequences(int num_sequences,
                                                              double val_fraction);

/// Full training loop over a sparsely labeled corpus.
TrainResult train(const LabeledCorpus& corpus, const ExperimentConfig& cfg,
                  const TrainSinks& sinks = {});

/// Requests a clean checkpoint-and-exit of a running train() (signal safe).
void request_stop();
void clear_stop();

struct Prediction {
  AULabelVector label;
  std::vector<double> probabilities;
};

struct FrameRef {
  int sequence = 0;  // index into corpus.sequences
  int frame = 0;
};

/// Inductive inference: each batch gets a seeded-random key position, the
/// window is cut around every requested frame and the ensemble is thresholded.
std::vector<Prediction> infer(KnowledgeSpreader& model, const LabeledCorpus& corpus,
                              const std::vector<FrameRef>& frames, std::uint64_t seed,
                              int batch_size = 64);

/// One prebuilt clip; the key frame is the clip's key_pos.
Prediction infer_clip(KnowledgeSpreader& model, const ClipSample& clip);

/// Macro F1 of infer() over every `stride`-th frame of every sequence.
F1Report evaluate_corpus(KnowledgeSpreader& model, const LabeledCorpus& corpus, std::uint64_t seed,
                         int stride = 1);

/// Ordered-vs-shuffled accuracy of the perturbation head on every
/// `stride`-th frame window.
double tpl_accuracy(KnowledgeSpreader& model, const LabeledCorpus& corpus, std::uint64_t seed,
                    int stride = 1);

std::string metrics_csv_header();

}  // namespace ksp
