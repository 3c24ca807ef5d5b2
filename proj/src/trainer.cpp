// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#include "ksp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "json.hpp"

namespace fs = std::filesystem;

namespace ksp {

namespace {

std::atomic<bool> g_stop_requested{false};

template <typename T>
void fisher_yates(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

AULabelVector threshold_row(const torch::Tensor& logits_row) {
  auto row = logits_row.to(torch::kFloat64).contiguous();
  AULabelVector y(static_cast<std::size_t>(row.numel()));
  const double* p = row.data_ptr<double>();
  for (std::int64_t u = 0; u < row.numel(); ++u) y[u] = p[u] >= 0.0 ? 1 : 0;
  return y;
}

std::string breakdown_csv(const LossBreakdown& b) {
  return format_double(b.skd) + "," + format_double(b.tkd) + "," + format_double(b.bce_ensemble) +
         "," + format_double(b.s) + "," + format_double(b.t) + "," + format_double(b.ssl) + "," +
         format_double(b.semi) + "," + format_double(b.w_ramp) + "," + format_double(b.total);
}

nlohmann::json breakdown_json(const LossBreakdown& b) {
  return {{"L_skd", b.skd}, {"L_tkd", b.tkd},   {"L_bce", b.bce_ensemble},
          {"L_s", b.s},     {"L_t", b.t},       {"L_ssl", b.ssl},
          {"L_semi", b.semi}, {"w_ramp", b.w_ramp}, {"L_total", b.total}};
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b) {
  acc.skd += b.skd;
  acc.tkd += b.tkd;
  acc.bce_ensemble += b.bce_ensemble;
  acc.s += b.s;
  acc.t += b.t;
  acc.ssl += b.ssl;
  acc.semi += b.semi;
  acc.w_ramp += b.w_ramp;
  acc.total += b.total;
}

LossBreakdown scaled(LossBreakdown b, double f) {
  b.skd *= f;
  b.tkd *= f;
  b.bce_ensemble *= f;
  b.s *= f;
  b.t *= f;
  b.ssl *= f;
  b.semi *= f;
  b.w_ramp *= f;
  b.total *= f;
  return b;
}

std::vector<std::vector<int>> draw_shuffles(std::size_t count, int n, std::mt19937_64& rng) {
  std::vector<std::vector<int>> perms;
  perms.reserve(count);
  for (std::size_t i = 0; i < count; ++i) perms.push_back(shuffle_permutation(n, rng));
  return perms;
}

torch::Tensor stack_images(const std::vector<const std::vector<float>*>& images,
                           const ModelConfig& m) {
  return images_to_tensor(images, m.image_height, m.image_width, m.image_channels);
}

}  // namespace

std::string to_string(TplVerdict v) {
  switch (v) {
    case TplVerdict::kAccepted:
      return "accepted";
    case TplVerdict::kRejected:
      return "rejected";
    case TplVerdict::kInactive:
      return "inactive";
  }
  return "inactive";
}

std::vector<PseudoLabelRecord> generate_pseudo_labels(const torch::Tensor& logits,
                                                      const std::vector<int>& positions) {
  TORCH_CHECK(logits.dim() == 2, "generate_pseudo_labels: expected [m, U] logits");
  auto probs = torch::sigmoid(logits.detach().to(torch::kFloat64)).contiguous();
  const auto m = probs.size(0), num_aus = probs.size(1);
  std::vector<PseudoLabelRecord> out(static_cast<std::size_t>(m));
  const double* p = probs.data_ptr<double>();
  for (std::int64_t i = 0; i < m; ++i) {
    auto& r = out[i];
    r.position = positions.empty() ? static_cast<int>(i) : positions.at(i);
    r.y_hat = AULabelVector(static_cast<std::size_t>(num_aus));
    r.confidences.resize(num_aus);
    for (std::int64_t u = 0; u < num_aus; ++u) {
      r.confidences[u] = p[i * num_aus + u];
      r.y_hat[u] = r.confidences[u] >= 0.5 ? 1 : 0;
    }
  }
  return out;
}

torch::Tensor pseudo_label_targets(const torch::Tensor& logits) {
  return (logits.detach() >= 0).to(logits.scalar_type());
}

std::vector<int> shuffle_permutation(int n, std::mt19937_64& rng) {
  if (n < 2) throw ConfigError("shuffle_permutation: n must be >= 2");
  std::vector<int> perm(n);
  for (;;) {
    std::iota(perm.begin(), perm.end(), 0);
    fisher_yates(perm, rng);
    for (int i = 0; i < n; ++i)
      if (perm[i] != i) return perm;
  }
}

torch::Tensor shuffle_features(const torch::Tensor& tokens, std::mt19937_64& rng) {
  TORCH_CHECK(tokens.dim() == 2, "shuffle_features: expected [n, W] tokens");
  const auto perm = shuffle_permutation(static_cast<int>(tokens.size(0)), rng);
  return tokens.index_select(0, torch::tensor(std::vector<std::int64_t>(perm.begin(), perm.end())));
}

TplVerdict tpl_gate(double ssl_logit, int epoch, int start_epoch) {
  if (epoch < start_epoch) return TplVerdict::kInactive;
  // sigmoid(x) < 0.5 <=> x < 0: predicted unperturbed.
  return ssl_logit < 0.0 ? TplVerdict::kAccepted : TplVerdict::kRejected;
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kNone:
      return "none";
    case Ablation::kNoSil:
      return "no-sil";
    case Ablation::kNoKsm:
      return "no-ksm";
    case Ablation::kNoTpl:
      return "no-tpl";
    case Ablation::kBaseline:
      return "baseline";
  }
  return "none";
}

Ablation parse_ablation(const std::string& s) {
  for (Ablation a : {Ablation::kNone, Ablation::kNoSil, Ablation::kNoKsm, Ablation::kNoTpl,
                     Ablation::kBaseline})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown ablation '" + s + "'");
}

ExperimentConfig apply_ablation(ExperimentConfig cfg, Ablation a) {
  switch (a) {
    case Ablation::kNone:
      break;
    case Ablation::kNoSil:
      cfg.model.mixer = TokenMixer::kMlp;
      break;
    case Ablation::kNoKsm:
      cfg.hp.lambda1 = 0.0;
      cfg.hp.lambda2 = 0.0;
      break;
    case Ablation::kNoTpl:
      cfg.hp.lambda3 = 0.0;
      cfg.options.tpl_gating = false;
      break;
    case Ablation::kBaseline:
      cfg.hp.lambda1 = cfg.hp.lambda2 = cfg.hp.lambda3 = cfg.hp.lambda4 = 0.0;
      cfg.hp.alpha = 0.0;
      cfg.options.tpl_gating = false;
      break;
  }
  return cfg;
}

Trainer::Trainer(const ExperimentConfig& cfg, std::vector<double> pos_weights) : cfg_(cfg) {
  validate(cfg_);
  if (static_cast<int>(pos_weights.size()) != cfg_.model.num_aus)
    throw ConfigError("Trainer: one positive weight per AU required");
  state_.rng_seed = cfg_.seed;
  state_.pos_weights = std::move(pos_weights);
  torch::manual_seed(cfg_.seed);
  model_ = KnowledgeSpreader(cfg_.model);
  optimizer_ = std::make_unique<torch::optim::SGD>(
      model_->parameters(), torch::optim::SGDOptions(cfg_.hp.lr)
                                .momentum(cfg_.hp.momentum)
                                .weight_decay(cfg_.hp.weight_decay));
  weights_ = torch::tensor(state_.pos_weights, torch::kFloat64).to(torch::kFloat32);
  rng_.seed(derive_seed(cfg_.seed, 7));
}

void Trainer::clip_gradients() {
  if (cfg_.options.grad_clip_norm > 0.0)
    torch::nn::utils::clip_grad_norm_(model_->parameters(), cfg_.options.grad_clip_norm);
}

int Trainer::scheduled_key_pos() const {
  return key_frame_position(state_.batch_counter, cfg_.model.clip_len);
}

Trainer::Inputs Trainer::make_inputs(const std::vector<ClipSample>& batch, bool augment) {
  const auto& m = cfg_.model;
  const int n = m.clip_len;
  std::vector<const std::vector<float>*> keys, frames;
  std::vector<float> targets;
  bool labeled = true;
  for (const auto& clip : batch) {
    if (static_cast<int>(clip.frames.size()) != n)
      throw DataError("clip has " + std::to_string(clip.frames.size()) + " frames, expected " +
                      std::to_string(n));
    keys.push_back(&clip.frames[clip.key_pos].image);
    for (const auto& f : clip.frames) frames.push_back(&f.image);
    const auto& label = clip.frames[clip.key_pos].label;
    if (!label) {
      labeled = false;
      continue;
    }
    for (auto v : label->values) targets.push_back(static_cast<float>(v));
  }
  const auto b = static_cast<std::int64_t>(batch.size());
  Inputs in;
  in.key_images = stack_images(keys, m);
  in.clip = stack_images(frames, m).view({b, n, m.image_channels, m.image_height, m.image_width});
  if (augment && cfg_.options.augment_strength > 0.0) {
    const double s = cfg_.options.augment_strength;
    std::uniform_real_distribution<double> jitter(-s, s);
    std::vector<float> gain(b), shift(b);
    for (std::int64_t i = 0; i < b; ++i) {
      gain[i] = static_cast<float>(1.0 + jitter(rng_));
      shift[i] = static_cast<float>(jitter(rng_));
    }
    auto g = torch::tensor(gain).view({b, 1, 1, 1, 1});
    auto sh = torch::tensor(shift).view({b, 1, 1, 1, 1});
    in.clip = ((in.clip - 0.5) * g + 0.5 + sh).clamp(0.0, 1.0);
  }
  if (labeled) in.targets = torch::tensor(targets).view({b, m.num_aus});
  return in;
}

StepResult Trainer::training_step(const std::vector<ClipSample>& batch) {
  if (batch.empty()) throw DataError("training_step: empty batch");
  const int key = scheduled_key_pos();
  for (const auto& clip : batch)
    if (clip.key_pos != key)
      throw DataError("rotation integrity: clip key_pos " + std::to_string(clip.key_pos) +
                      " but batch " + std::to_string(state_.batch_counter) + " schedules " +
                      std::to_string(key));
  const auto& hp = cfg_.hp;
  const int n = cfg_.model.clip_len;
  const int epoch = state_.epoch;
  auto in = make_inputs(batch, cfg_.options.augment);
  if (!in.targets.defined()) throw DataError("training_step: key frame without a label");
  const auto b = static_cast<std::int64_t>(batch.size());
  const auto perms = draw_shuffles(batch.size(), n, rng_);

  model_->train();
  auto out = model_->forward(in.key_images, in.clip, key, true, perms);
  const auto& y = in.targets;
  const auto dir = cfg_.options.kl_direction;

  LossTerms terms;
  terms.skd = kl_distill(out.o_a, out.o_k, hp.temperature, dir);
  terms.s = composite_supervised(out.o_a, out.o_k, y, weights_, hp.alpha, terms.skd);
  terms.tkd = kl_distill(out.o_b, out.o_a, hp.temperature, dir);
  terms.t = composite_supervised(out.o_b, out.o_a, y, weights_, hp.alpha, terms.tkd);
  terms.bce_ensemble = weighted_bce(out.o_output, y, weights_);
  terms.semi_per_clip = pseudo_bce_per_clip(out.o_ps, pseudo_label_targets(out.o_ps), weights_);
  terms.ssl = torch::binary_cross_entropy_with_logits(
      torch::cat({out.o_ssl, out.o_ssl_shuffled}),
      torch::cat({torch::zeros({b}), torch::ones({b})}));

  StepResult res;
  res.batch_index = state_.batch_counter;
  res.key_pos = key;
  auto ssl_ordered = out.o_ssl.detach().to(torch::kFloat64).contiguous();
  auto ssl_shuffled = out.o_ssl_shuffled.detach().to(torch::kFloat64).contiguous();
  std::vector<bool> mask(b);
  for (std::int64_t i = 0; i < b; ++i) {
    const double logit = ssl_ordered.data_ptr<double>()[i];
    TplVerdict v = cfg_.options.tpl_gating
                       ? tpl_gate(logit, epoch, hp.tpl_start_epoch)
                       : (epoch < hp.tpl_start_epoch ? TplVerdict::kInactive : TplVerdict::kAccepted);
    res.verdicts.push_back(v);
    mask[i] = v == TplVerdict::kAccepted;
    res.tpl_correct += logit < 0.0;
    res.tpl_correct += ssl_shuffled.data_ptr<double>()[i] >= 0.0;
  }
  res.tpl_total = static_cast<std::size_t>(2 * b);

  const double w_ramp = ramp_weight(std::max(0, epoch - 1), hp);
  auto total = total_loss(terms, hp, mask, epoch, w_ramp);
  optimizer_->zero_grad();
  total.total.backward();
  clip_gradients();
  optimizer_->step();
  ++state_.batch_counter;

  res.losses = total.breakdown;
  auto semi = total.semi_per_clip.detach().to(torch::kFloat64).contiguous();
  res.semi_per_clip.assign(semi.data_ptr<double>(), semi.data_ptr<double>() + b);
  for (std::int64_t i = 0; i < b; ++i) {
    auto records = generate_pseudo_labels(out.o_ps[i], out.pseudo_positions);
    for (auto& r : records) {
      r.clip_id = batch[i].clip_id;
      r.tpl_verdict = res.verdicts[i];
      if (!batch[i].audit_labels.empty()) r.ground_truth = batch[i].audit_labels[r.position];
      res.pseudo_labels.push_back(std::move(r));
    }
    res.predictions.push_back(threshold_row(out.o_output[i].detach()));
    res.targets.push_back(*batch[i].frames[key].label);
  }
  return res;
}

StepResult Trainer::unlabeled_step(const std::vector<ClipSample>& batch) {
  if (batch.empty()) throw DataError("unlabeled_step: empty batch");
  const int key = scheduled_key_pos();
  for (const auto& clip : batch)
    if (clip.key_pos != key) throw DataError("rotation integrity: clip key_pos mismatch");
  const auto& hp = cfg_.hp;
  const int n = cfg_.model.clip_len;
  const int epoch = state_.epoch;
  auto in = make_inputs(batch, cfg_.options.augment);
  const auto b = static_cast<std::int64_t>(batch.size());
  const auto perms = draw_shuffles(batch.size(), n, rng_);

  model_->train();
  auto out = model_->forward(in.key_images, in.clip, key, true, perms);
  std::vector<torch::Tensor> rows;
  std::vector<int> positions;
  for (int q = 0, ps = 0; q < n; ++q) {
    rows.push_back(q == key ? out.o_k : out.o_ps.select(1, ps++));
    positions.push_back(q);
  }
  auto all = torch::stack(rows, 1);
  auto semi_per_clip = pseudo_bce_per_clip(all, pseudo_label_targets(all), weights_);
  auto ssl = torch::binary_cross_entropy_with_logits(
      torch::cat({out.o_ssl, out.o_ssl_shuffled}),
      torch::cat({torch::zeros({b}), torch::ones({b})}));

  StepResult res;
  res.batch_index = state_.batch_counter;
  res.key_pos = key;
  auto ssl_ordered = out.o_ssl.detach().to(torch::kFloat64).contiguous();
  std::vector<double> mask(b, 0.0);
  for (std::int64_t i = 0; i < b; ++i) {
    const double logit = ssl_ordered.data_ptr<double>()[i];
    TplVerdict v = cfg_.options.tpl_gating
                       ? tpl_gate(logit, epoch, hp.tpl_start_epoch)
                       : (epoch < hp.tpl_start_epoch ? TplVerdict::kInactive : TplVerdict::kAccepted);
    res.verdicts.push_back(v);
    mask[i] = v == TplVerdict::kAccepted ? 1.0 : 0.0;
  }
  auto gated = semi_per_clip * torch::tensor(mask, torch::kFloat64).to(semi_per_clip.options());
  const double w_ramp = ramp_weight(std::max(0, epoch - 1), hp);
  auto semi = gated.sum() / static_cast<double>(b);
  auto total = w_ramp * (hp.lambda3 * ssl + hp.lambda4 * semi);
  optimizer_->zero_grad();
  total.backward();
  clip_gradients();
  optimizer_->step();
  ++state_.batch_counter;

  res.losses.ssl = ssl.item<double>();
  res.losses.semi = semi.item<double>();
  res.losses.w_ramp = w_ramp;
  res.losses.total = total.item<double>();
  auto g = gated.detach().to(torch::kFloat64).contiguous();
  res.semi_per_clip.assign(g.data_ptr<double>(), g.data_ptr<double>() + b);
  for (std::int64_t i = 0; i < b; ++i) {
    auto records = generate_pseudo_labels(all[i], positions);
    for (auto& r : records) {
      r.clip_id = batch[i].clip_id;
      r.tpl_verdict = res.verdicts[i];
      if (!batch[i].audit_labels.empty()) r.ground_truth = batch[i].audit_labels[r.position];
      res.pseudo_labels.push_back(std::move(r));
    }
  }
  return res;
}

std::pair<std::vector<int>, std::vector<int>> split_sequences(int num_sequences,
                                                              double val_fraction) {
  int n_val = 0;
  if (val_fraction > 0.0 && num_sequences > 1)
    n_val = std::clamp(static_cast<int>(std::lround(num_sequences * val_fraction)), 1,
                       num_sequences - 1);
  std::vector<int> train_idx, val_idx;
  for (int i = 0; i < num_sequences; ++i)
    (i < num_sequences - n_val ? train_idx : val_idx).push_back(i);
  return {train_idx, val_idx};
}

void request_stop() { g_stop_requested.store(true); }
void clear_stop() { g_stop_requested.store(false); }

std::string metrics_csv_header() {
  return "step,epoch,key_pos,L_skd,L_tkd,L_bce,L_s,L_t,L_ssl,L_semi,w_ramp,L_total";
}

TrainResult train(const LabeledCorpus& corpus, const ExperimentConfig& cfg,
                  const TrainSinks& sinks) {
  validate(cfg);
  if (corpus.num_aus != cfg.model.num_aus)
    throw ConfigError("corpus has " + std::to_string(corpus.num_aus) + " AUs, model expects " +
                      std::to_string(cfg.model.num_aus));
  if (corpus.image_height != cfg.model.image_height || corpus.image_width != cfg.model.image_width ||
      corpus.image_channels != cfg.model.image_channels)
    throw ConfigError("corpus image shape does not match the model config");
  torch::set_num_threads(1);

  const auto [train_idx, val_idx] =
      split_sequences(static_cast<int>(corpus.sequences.size()), cfg.options.val_fraction);
  const LabeledCorpus train_corpus = corpus.subset(train_idx);
  const LabeledCorpus val_corpus = corpus.subset(val_idx);
  const auto visible = train_corpus.visible_labels();
  if (visible.empty()) throw DataError("train: the training split has no visible labels");

  Trainer trainer(cfg, positive_class_weights(visible));
  const int n = cfg.model.clip_len;
  const auto& hp = cfg.hp;

  std::vector<FrameRef> anchors, unlabeled;
  const int stride = std::max(1, static_cast<int>(std::lround(1.0 / cfg.options.label_ratio)));
  for (int s = 0; s < static_cast<int>(train_corpus.sequences.size()); ++s) {
    const auto& seq = train_corpus.sequences[s];
    for (int t = 0; t < seq.num_frames(); ++t) {
      if (seq.visible[t]) {
        anchors.push_back({s, t});
      } else if (cfg.options.unlabeled_clips && stride > 1 && t % stride == stride / 2) {
        unlabeled.push_back({s, t});
      }
    }
  }

  std::ofstream metrics, events;
  if (!sinks.run_dir.empty()) {
    fs::create_directories(sinks.run_dir);
    metrics.open(fs::path(sinks.run_dir) / "metrics.csv");
    events.open(fs::path(sinks.run_dir) / "events.jsonl");
    metrics << metrics_csv_header() << "\n";
    events << nlohmann::json{{"event", "run_start"},
                             {"seed", cfg.seed},
                             {"train_sequences", train_idx.size()},
                             {"val_sequences", val_idx.size()},
                             {"labeled_clips", anchors.size()},
                             {"parameters", trainer.model()->parameter_count()}}
                  .dump()
           << "\n";
  }

  TrainResult result;
  std::size_t pooled_accepted = 0, pooled_gated = 0;
  double pooled_correct = 0.0;

  auto run_batches = [&](std::vector<FrameRef>& refs, bool labeled, EpochMetrics& em,
                         LossBreakdown& loss_sum, std::vector<AULabelVector>& preds,
                         std::vector<AULabelVector>& truth, std::size_t& tpl_correct,
                         std::size_t& tpl_total, double& acc_correct, double& acc_all_correct) {
    fisher_yates(refs, trainer.rng());
    const int bs = hp.batch_size;
    for (std::size_t start = 0; start < refs.size(); start += bs) {
      if (g_stop_requested.load()) return false;
      const int key = trainer.scheduled_key_pos();
      std::vector<ClipSample> clips;
      for (std::size_t i = start; i < std::min(refs.size(), start + bs); ++i) {
        const auto& seq = train_corpus.sequences[refs[i].sequence];
        auto clip = make_clip(seq, refs[i].frame, n, key);
        if (!labeled) clip.frames[key].label.reset();
        clips.push_back(std::move(clip));
      }
      StepResult res = labeled ? trainer.training_step(clips) : trainer.unlabeled_step(clips);
      accumulate(loss_sum, res.losses);
      ++em.steps;
      preds.insert(preds.end(), res.predictions.begin(), res.predictions.end());
      truth.insert(truth.end(), res.targets.begin(), res.targets.end());
      tpl_correct += res.tpl_correct;
      tpl_total += res.tpl_total;
      for (const auto& r : res.pseudo_labels) {
        ++em.pseudo_generated;
        double match = 0.0;
        if (r.ground_truth) {
          for (std::size_t u = 0; u < r.y_hat.size(); ++u)
            match += r.y_hat[u] == (*r.ground_truth)[u];
          match /= static_cast<double>(r.y_hat.size());
        }
        acc_all_correct += match;
        if (r.tpl_verdict == TplVerdict::kAccepted) {
          ++em.pseudo_accepted;
          acc_correct += match;
        } else if (r.tpl_verdict == TplVerdict::kRejected) {
          ++em.pseudo_rejected;
        }
      }
      if (metrics.is_open())
        metrics << res.batch_index << "," << em.epoch << "," << res.key_pos << ","
                << breakdown_csv(res.losses) << "\n";
    }
    return true;
  };

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    trainer.set_epoch(epoch);
    EpochMetrics em;
    em.epoch = epoch;
    em.w_ramp = ramp_weight(epoch - 1, hp);
    LossBreakdown loss_sum;
    std::vector<AULabelVector> preds, truth;
    std::size_t tpl_correct = 0, tpl_total = 0;
    double acc_correct = 0.0, acc_all_correct = 0.0;

    bool ok = run_batches(anchors, true, em, loss_sum, preds, truth, tpl_correct, tpl_total,
                          acc_correct, acc_all_correct);
    if (ok && cfg.options.unlabeled_clips && epoch > cfg.options.unlabeled_start_epoch &&
        !unlabeled.empty())
      ok = run_batches(unlabeled, false, em, loss_sum, preds, truth, tpl_correct, tpl_total,
                       acc_correct, acc_all_correct);
    if (!ok) {
      result.report.interrupted = true;
      if (!sinks.run_dir.empty()) {
        RunState st = trainer.state();
        const auto path = (fs::path(sinks.run_dir) / "interrupted.ckpt").string();
        save_checkpoint(path, trainer.model(), cfg, st);
        events << nlohmann::json{{"event", "interrupted"}, {"epoch", epoch}, {"checkpoint", path}}
                      .dump()
               << "\n";
      }
      break;
    }

    em.mean_losses = scaled(loss_sum, em.steps ? 1.0 / static_cast<double>(em.steps) : 0.0);
    em.train_f1 = preds.empty() ? 0.0 : f1_scores(preds, truth).macro_f1;
    em.tpl_train_accuracy =
        tpl_total ? static_cast<double>(tpl_correct) / static_cast<double>(tpl_total) : 0.0;
    const std::size_t gated = em.pseudo_accepted + em.pseudo_rejected;
    em.pseudo_acceptance_rate =
        gated ? static_cast<double>(em.pseudo_accepted) / static_cast<double>(gated) : 0.0;
    em.pseudo_accuracy =
        em.pseudo_accepted ? acc_correct / static_cast<double>(em.pseudo_accepted) : 0.0;
    em.pseudo_accuracy_all =
        em.pseudo_generated ? acc_all_correct / static_cast<double>(em.pseudo_generated) : 0.0;
    if (epoch >= hp.tpl_start_epoch) {
      pooled_accepted += em.pseudo_accepted;
      pooled_gated += gated;
      pooled_correct += acc_correct;
    }

    if (!val_corpus.sequences.empty()) {
      auto report = evaluate_corpus(trainer.model(), val_corpus, derive_seed(cfg.seed, 1000 + epoch),
                                    cfg.options.eval_stride);
      em.val_f1 = report.macro_f1;
      em.tpl_val_accuracy = tpl_accuracy(trainer.model(), val_corpus,
                                         derive_seed(cfg.seed, 2000 + epoch), cfg.options.eval_stride);
      result.report.final_val = std::move(report);
    }
    result.report.epochs.push_back(em);

    if (!sinks.quiet)
      std::cerr << "epoch " << epoch << " loss " << em.mean_losses.total << " train_f1 "
                << em.train_f1 << " val_f1 " << em.val_f1 << " tpl_val " << em.tpl_val_accuracy
                << " pl_acc " << em.pseudo_accuracy << " accept " << em.pseudo_acceptance_rate
                << "\n";

    if (events.is_open()) {
      events << nlohmann::json{{"event", "epoch_end"},
                               {"epoch", epoch},
                               {"steps", em.steps},
                               {"train_f1", em.train_f1},
                               {"val_f1", em.val_f1},
                               {"tpl_train_accuracy", em.tpl_train_accuracy},
                               {"tpl_val_accuracy", em.tpl_val_accuracy},
                               {"pseudo_acceptance_rate", em.pseudo_acceptance_rate},
                               {"pseudo_accuracy", em.pseudo_accuracy},
                               {"pseudo_accuracy_all", em.pseudo_accuracy_all},
                               {"losses", breakdown_json(em.mean_losses)}}
                    .dump()
             << "\n";
      if (cfg.options.save_checkpoints) {
        const auto path = (fs::path(sinks.run_dir) / ("epoch_" + std::to_string(epoch) + ".ckpt"))
                              .string();
        save_checkpoint(path, trainer.model(), cfg, trainer.state());
        events << nlohmann::json{{"event", "checkpoint"}, {"epoch", epoch}, {"path", path}}.dump()
               << "\n";
      }
    }
  }

  result.report.total_steps = trainer.state().batch_counter;
  result.report.pseudo_acceptance_rate =
      pooled_gated ? static_cast<double>(pooled_accepted) / static_cast<double>(pooled_gated) : 0.0;
  result.report.pseudo_accuracy =
      pooled_accepted ? pooled_correct / static_cast<double>(pooled_accepted) : 0.0;
  result.model = trainer.model();
  result.state = trainer.state();

  if (!sinks.run_dir.empty()) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& em : result.report.epochs)
      epochs.push_back({{"epoch", em.epoch},
                        {"w_ramp", em.w_ramp},
                        {"train_f1", em.train_f1},
                        {"val_f1", em.val_f1},
                        {"tpl_train_accuracy", em.tpl_train_accuracy},
                        {"tpl_val_accuracy", em.tpl_val_accuracy},
                        {"pseudo_generated", em.pseudo_generated},
                        {"pseudo_accepted", em.pseudo_accepted},
                        {"pseudo_rejected", em.pseudo_rejected},
                        {"pseudo_acceptance_rate", em.pseudo_acceptance_rate},
                        {"pseudo_accuracy", em.pseudo_accuracy},
                        {"pseudo_accuracy_all", em.pseudo_accuracy_all},
                        {"losses", breakdown_json(em.mean_losses)}});
    const auto& fv = result.report.final_val;
    nlohmann::json report = {{"epochs", epochs},
                             {"total_steps", result.report.total_steps},
                             {"interrupted", result.report.interrupted},
                             {"pseudo_accuracy", result.report.pseudo_accuracy},
                             {"pseudo_acceptance_rate", result.report.pseudo_acceptance_rate},
                             {"final_val_macro_f1", fv.macro_f1},
                             {"final_val_per_au_f1", fv.per_au_f1}};
    std::ofstream(fs::path(sinks.run_dir) / "report.json") << report.dump(2) << "\n";
    events << nlohmann::json{{"event", "run_end"}, {"steps", result.report.total_steps}}.dump()
           << "\n";
  }
  return result;
}

std::vector<Prediction> infer(KnowledgeSpreader& model, const LabeledCorpus& corpus,
                              const std::vector<FrameRef>& frames, std::uint64_t seed,
                              int batch_size) {
  torch::NoGradGuard no_grad;
  model->eval();
  const auto& m = model->config();
  const int n = m.clip_len;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<Prediction> out;
  out.reserve(frames.size());
  for (std::size_t start = 0; start < frames.size(); start += batch_size) {
    const int key = pick(rng);
    std::vector<ClipSample> clips;
    for (std::size_t i = start; i < std::min(frames.size(), start + batch_size); ++i)
      clips.push_back(make_clip(corpus.sequences.at(frames[i].sequence), frames[i].frame, n, key));
    std::vector<const std::vector<float>*> keys, imgs;
    for (const auto& c : clips) {
      keys.push_back(&c.frames[key].image);
      for (const auto& f : c.frames) imgs.push_back(&f.image);
    }
    const auto b = static_cast<std::int64_t>(clips.size());
    auto key_images = stack_images(keys, m);
    auto clip = stack_images(imgs, m).view({b, n, m.image_channels, m.image_height, m.image_width});
    auto res = model->forward(key_images, clip, key, false);
    auto logits = res.o_output.to(torch::kFloat64).contiguous();
    const double* p = logits.data_ptr<double>();
    for (std::int64_t i = 0; i < b; ++i) {
      Prediction pr;
      pr.label = AULabelVector(static_cast<std::size_t>(m.num_aus));
      pr.probabilities.resize(m.num_aus);
      for (int u = 0; u < m.num_aus; ++u) {
        const double x = p[i * m.num_aus + u];
        pr.probabilities[u] = 1.0 / (1.0 + std::exp(-x));
        pr.label[u] = x >= 0.0 ? 1 : 0;
      }
      out.push_back(std::move(pr));
    }
  }
  return out;
}

Prediction infer_clip(KnowledgeSpreader& model, const ClipSample& clip) {
  torch::NoGradGuard no_grad;
  model->eval();
  const auto& m = model->config();
  const int n = m.clip_len;
  if (static_cast<int>(clip.frames.size()) < n)
    throw DataError("infer_clip: clip shorter than the configured length");
  if (static_cast<int>(clip.frames.size()) != n || clip.key_pos < 0 || clip.key_pos >= n)
    throw DataError("infer_clip: clip does not match the configured length");
  std::vector<const std::vector<float>*> imgs;
  for (const auto& f : clip.frames) imgs.push_back(&f.image);
  auto key_images = stack_images({&clip.frames[clip.key_pos].image}, m);
  auto frames = stack_images(imgs, m).view({1, n, m.image_channels, m.image_height, m.image_width});
  auto res = model->forward(key_images, frames, clip.key_pos, false);
  auto logits = res.o_output.to(torch::kFloat64).contiguous();
  Prediction pr;
  pr.label = AULabelVector(static_cast<std::size_t>(m.num_aus));
  pr.probabilities.resize(m.num_aus);
  for (int u = 0; u < m.num_aus; ++u) {
    const double x = logits.data_ptr<double>()[u];
    pr.probabilities[u] = 1.0 / (1.0 + std::exp(-x));
    pr.label[u] = x >= 0.0 ? 1 : 0;
  }
  return pr;
}

namespace {

std::vector<FrameRef> strided_frames(const LabeledCorpus& corpus, int stride) {
  std::vector<FrameRef> frames;
  for (int s = 0; s < static_cast<int>(corpus.sequences.size()); ++s)
    for (int t = 0; t < corpus.sequences[s].num_frames(); t += stride) frames.push_back({s, t});
  return frames;
}

}  // namespace

F1Report evaluate_corpus(KnowledgeSpreader& model, const LabeledCorpus& corpus, std::uint64_t seed,
                         int stride) {
  const auto frames = strided_frames(corpus, stride);
  const auto preds = infer(model, corpus, frames, seed);
  std::vector<AULabelVector> p, y;
  p.reserve(preds.size());
  y.reserve(preds.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    p.push_back(preds[i].label);
    y.push_back(*corpus.sequences[frames[i].sequence].frames[frames[i].frame].label);
  }
  return f1_scores(p, y);
}

double tpl_accuracy(KnowledgeSpreader& model, const LabeledCorpus& corpus, std::uint64_t seed,
                    int stride) {
  torch::NoGradGuard no_grad;
  model->eval();
  const auto& m = model->config();
  const int n = m.clip_len;
  const auto frames = strided_frames(corpus, stride);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::size_t correct = 0, total = 0;
  const std::size_t bs = 64;
  for (std::size_t start = 0; start < frames.size(); start += bs) {
    const int key = pick(rng);
    std::vector<ClipSample> clips;
    for (std::size_t i = start; i < std::min(frames.size(), start + bs); ++i)
      clips.push_back(make_clip(corpus.sequences[frames[i].sequence], frames[i].frame, n, key));
    std::vector<const std::vector<float>*> keys, imgs;
    for (const auto& c : clips) {
      keys.push_back(&c.frames[key].image);
      for (const auto& f : c.frames) imgs.push_back(&f.image);
    }
    const auto b = static_cast<std::int64_t>(clips.size());
    const auto perms = draw_shuffles(clips.size(), n, rng);
    auto res = model->forward(stack_images(keys, m),
                              stack_images(imgs, m).view(
                                  {b, n, m.image_channels, m.image_height, m.image_width}),
                              key, false, perms);
    auto ordered = res.o_ssl.to(torch::kFloat64).contiguous();
    auto shuffled = res.o_ssl_shuffled.to(torch::kFloat64).contiguous();
    for (std::int64_t i = 0; i < b; ++i) {
      correct += ordered.data_ptr<double>()[i] < 0.0;
      correct += shuffled.data_ptr<double>()[i] >= 0.0;
    }
    total += static_cast<std::size_t>(2 * b);
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace ksp
