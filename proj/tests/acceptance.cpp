// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors
//
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ksp/experiments.hpp"
#include "ksp/losses.hpp"
#include "ksp/models.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kOracleTol = 1e-6;
constexpr double kGradRelTol = 1e-3;
constexpr double kFdEps = 1e-6;
constexpr int kFdCoords = 20;
constexpr int kOracleCases = 100;
constexpr double kTplAccuracyMin = 0.90;
constexpr double kPseudoGainMin = 0.01;
constexpr double kBaselineGapMin = 0.03;
constexpr double kCriterion5Seconds = 600.0;
constexpr double kSuiteSeconds = 1800.0;

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// Experiments ------------------------------------------------------------

ksp::ExperimentConfig desk_preset(std::uint64_t seed) {
  ksp::ExperimentConfig cfg;
  cfg.hp.epochs = 15;
  cfg.hp.batch_size = 4;
  cfg.hp.lr = 0.1;
  cfg.options.grad_clip_norm = 1.0;
  cfg.seed = seed;
  return cfg;
}

// Caches train() by (visible labels, config) so criteria can share runs.
struct RunCache {
  struct Entry {
    ksp::TrainReport report;
    double seconds = 0.0;
  };
  std::map<std::string, Entry> runs;

  const Entry& get(const ksp::LabeledCorpus& labeled, const ksp::ExperimentConfig& cfg) {
    const auto key = std::to_string(labeled.num_visible()) + "|" + ksp::to_config_text(cfg);
    auto it = runs.find(key);
    if (it != runs.end()) return it->second;
    const auto t0 = Clock::now();
    Entry e{ksp::train(labeled, cfg).report, 0.0};
    e.seconds = seconds_since(t0);
    return runs.emplace(key, std::move(e)).first->second;
  }
  ksp::ModelFactory factory() {
    return [this](const ksp::LabeledCorpus& l, const ksp::ExperimentConfig& c) {
      return get(l, c).report;
    };
  }
};

struct Shared {
  ksp::LabeledCorpus corpus;
  ksp::LabeledCorpus labeled10;
  RunCache cache;
};

// Finite differences ------------------------------------------------------

// Central differences at kFdCoords random coordinates of `vars`; returns the worst relative error.
double fd_check(std::vector<torch::Tensor> vars, const std::function<torch::Tensor()>& f,
                std::uint64_t seed) {
  for (auto& v : vars) v.mutable_grad() = torch::Tensor();
  f().backward();
  std::vector<std::pair<std::size_t, std::int64_t>> coords;
  for (std::size_t k = 0; k < vars.size(); ++k)
    if (vars[k].grad().defined())
      for (std::int64_t i = 0; i < vars[k].numel(); ++i) coords.emplace_back(k, i);
  if (coords.empty()) return 1e9;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, coords.size() - 1);
  double worst = 0.0;
  for (int c = 0; c < kFdCoords; ++c) {
    const auto [k, i] = coords[pick(rng)];
    const double ana = vars[k].grad().view(-1)[i].item<double>();
    double plus = 0.0, minus = 0.0;
    {
      torch::NoGradGuard guard;
      auto flat = vars[k].view(-1);
      const double orig = flat[i].item<double>();
      flat[i].fill_(orig + kFdEps);
      plus = f().item<double>();
      flat[i].fill_(orig - kFdEps);
      minus = f().item<double>();
      flat[i].fill_(orig);
    }
    const double num = (plus - minus) / (2 * kFdEps);
    worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
  }
  return worst;
}

torch::Tensor project(const std::vector<torch::Tensor>& outs) {
  torch::Tensor total = torch::zeros({}, outs.front().options());
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  for (const auto& o : outs) {
    std::vector<double> dir(o.numel());
    for (auto& d : dir) d = g(rng);
    total = total + (o * torch::tensor(dir, o.options()).view(o.sizes())).sum();
  }
  return total;
}

json to_json(const torch::Tensor& t) {
  auto c = t.contiguous().to(torch::kFloat64);
  if (c.dim() == 0) return c.item<double>();
  json out = json::array();
  for (std::int64_t i = 0; i < c.size(0); ++i) out.push_back(to_json(c[i]));
  return out;
}

// Criteria -----------------------------------------------------------------

Outcome criterion1(Shared&) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto logits = [&](std::vector<std::int64_t> shape) {
    return torch::randn(shape, kF64) * uni(0.5, 4.0);
  };
  auto bits = [&](std::vector<std::int64_t> shape) {
    return torch::randint(0, 2, shape, kF64);
  };
  auto weights = [&](std::int64_t u) { return torch::rand({u}, kF64) * 9.9 + 0.1; };
  torch::manual_seed(2024);

  json cases = json::array();
  std::vector<double> ours;
  std::vector<std::string> ops;
  for (int i = 0; i < kOracleCases; ++i) {
    const std::int64_t b = dim(rng), u = dim(rng);
    auto p = logits({b, u}), w = logits({b, u});
    const double temperature = uni(0.5, 4.0);
    cases.push_back({{"op", "kl_distill"}, {"p", to_json(p)}, {"w", to_json(w)},
                     {"temperature", temperature}});
    ours.push_back(ksp::kl_distill(p, w, temperature).item<double>());
  }
  for (int i = 0; i < kOracleCases; ++i) {
    const std::int64_t b = dim(rng), u = dim(rng);
    auto x = logits({b, u}), y = bits({b, u}), wt = weights(u);
    cases.push_back({{"op", "weighted_bce"}, {"logits", to_json(x)}, {"targets", to_json(y)},
                     {"weights", to_json(wt)}});
    ours.push_back(ksp::weighted_bce(x, y, wt).item<double>());
  }
  for (int i = 0; i < kOracleCases; ++i) {
    const std::int64_t b = dim(rng), n1 = dim(rng), u = dim(rng);
    auto x = logits({b, n1, u}), y = bits({b, n1, u}), wt = weights(u);
    cases.push_back({{"op", "pseudo_bce"}, {"logits", to_json(x)}, {"targets", to_json(y)},
                     {"weights", to_json(wt)}});
    ours.push_back(ksp::pseudo_bce(x, y, wt).item<double>());
  }
  for (int i = 0; i < kOracleCases; ++i) {
    const int x = std::uniform_int_distribution<int>(0, 12)(rng);
    const double omega = uni(0.5, 5.0), mu = uni(-1.0, 1.0), sigma = uni(2.0, 8.0);
    const int warmup = std::uniform_int_distribution<int>(1, 8)(rng);
    cases.push_back({{"op", "ramp_weight"}, {"x", x}, {"omega", omega}, {"mu", mu},
                     {"sigma", sigma}, {"warmup", warmup}});
    ours.push_back(ksp::ramp_weight(x, omega, mu, sigma, warmup));
  }
  for (int i = 0; i < kOracleCases; ++i) {
    ksp::HyperParams hp;
    hp.lambda1 = uni(0, 1);
    hp.lambda2 = uni(0, 1);
    hp.lambda3 = uni(0, 1);
    hp.lambda4 = uni(0, 1);
    hp.tpl_start_epoch = std::uniform_int_distribution<int>(1, 5)(rng);
    const int epoch = std::uniform_int_distribution<int>(1, 8)(rng);
    const double w_ramp = uni(0, 1);
    const std::int64_t b = dim(rng);
    auto scalar = [&] { return torch::tensor(uni(0, 3), kF64); };
    ksp::LossTerms terms{scalar(), scalar(), scalar(), scalar(), scalar(), scalar(),
                         torch::rand({b}, kF64) * 3};
    std::vector<bool> mask(b);
    json jmask = json::array();
    for (auto&& m : mask) {
      m = unit(rng) < 0.5;
      jmask.push_back(static_cast<bool>(m));
    }
    cases.push_back({{"op", "total_loss"},
                     {"lambda1", hp.lambda1},
                     {"lambda2", hp.lambda2},
                     {"lambda3", hp.lambda3},
                     {"lambda4", hp.lambda4},
                     {"s", terms.s.item<double>()},
                     {"t", terms.t.item<double>()},
                     {"bce", terms.bce_ensemble.item<double>()},
                     {"ssl", terms.ssl.item<double>()},
                     {"semi_per_clip", to_json(terms.semi_per_clip)},
                     {"mask", jmask},
                     {"epoch", epoch},
                     {"tpl_start_epoch", hp.tpl_start_epoch},
                     {"w_ramp", w_ramp}});
    ours.push_back(ksp::total_loss(terms, hp, mask, epoch, w_ramp).total.item<double>());
  }

  const auto dir = fs::temp_directory_path() / "ksp_acceptance_oracle";
  fs::create_directories(dir);
  const auto in = dir / "cases.json", out = dir / "values.json";
  std::ofstream(in) << cases.dump();
  const std::string cmd = "python3 \"" KSP_ORACLE_SCRIPT "\" \"" + in.string() + "\" \"" +
                          out.string() + "\"";
  if (std::system(cmd.c_str()) != 0) return {false, "oracle script failed"};
  json ref;
  std::ifstream(out) >> ref;
  if (ref.size() != ours.size()) return {false, "oracle returned " + std::to_string(ref.size())};
  const char* names[] = {"kl_distill", "weighted_bce", "pseudo_bce", "ramp_weight", "total_loss"};
  std::ostringstream detail;
  bool pass = true;
  for (int op = 0; op < 5; ++op) {
    double worst = 0.0;
    for (int i = 0; i < kOracleCases; ++i) {
      const std::size_t k = op * kOracleCases + i;
      worst = std::max(worst, std::abs(ours[k] - ref[k].get<double>()));
    }
    pass = pass && worst <= kOracleTol;
    detail << names[op] << " " << worst << (op < 4 ? ", " : "");
  }
  fs::remove_all(dir);
  return {pass, "max abs err: " + detail.str()};
}

Outcome criterion2(Shared&) {
  torch::manual_seed(31);
  std::vector<std::pair<std::string, double>> errs;
  const std::int64_t b = 3, u = 4, n = 3;

  {
    auto p = torch::randn({b, u}, kF64).requires_grad_();
    auto w = torch::randn({b, u}, kF64).requires_grad_();
    const double temperature = 2.0;
    // The distillation target is a constant to the gradient; freeze it for the differences.
    const auto q = ksp::soft_probs((p.detach() + w.detach()) / 2, temperature);
    auto frozen = [&] {
      return temperature * temperature / static_cast<double>(b) *
             (ksp::bernoulli_kl(q, ksp::soft_probs(p, temperature)) +
              ksp::bernoulli_kl(q, ksp::soft_probs(w, temperature)))
                 .sum();
    };
    p.mutable_grad() = torch::Tensor();
    w.mutable_grad() = torch::Tensor();
    ksp::kl_distill(p, w, temperature).backward();
    const auto gp = p.grad().clone(), gw = w.grad().clone();
    double worst = fd_check({p, w}, frozen, 1);
    const double agree = std::max((gp - p.grad()).abs().max().item<double>(),
                                  (gw - w.grad()).abs().max().item<double>());
    if (agree > 1e-12) worst = std::max(worst, 1.0);
    errs.emplace_back("kl_distill", worst);
  }
  {
    auto x = torch::randn({b, u}, kF64).requires_grad_();
    auto y = torch::randint(0, 2, {b, u}, kF64);
    auto wt = torch::rand({u}, kF64) * 3 + 0.5;
    errs.emplace_back("weighted_bce", fd_check({x}, [&] { return ksp::weighted_bce(x, y, wt); }, 2));
    auto xp = torch::randn({b, n - 1, u}, kF64).requires_grad_();
    auto yp = torch::randint(0, 2, {b, n - 1, u}, kF64);
    errs.emplace_back("pseudo_bce", fd_check({xp}, [&] { return ksp::pseudo_bce(xp, yp, wt); }, 3));
    auto a = torch::randn({b, u}, kF64).requires_grad_();
    auto kl = torch::rand({}, kF64).requires_grad_();
    errs.emplace_back("composite_supervised",
                      fd_check({x, a, kl},
                               [&] { return ksp::composite_supervised(x, a, y, wt, 0.5, kl); }, 4));
  }
  {
    auto mk = [] { return torch::rand({}, kF64).requires_grad_(); };
    ksp::LossTerms terms{mk(), mk(), mk(), mk(), mk(), mk(),
                         torch::rand({4}, kF64).requires_grad_()};
    ksp::HyperParams hp;
    errs.emplace_back("total_loss",
                      fd_check({terms.bce_ensemble, terms.s, terms.t, terms.ssl, terms.semi_per_clip},
                               [&] {
                                 return ksp::total_loss(terms, hp, {true, false, true, false}, 4, 0.7)
                                     .total;
                               },
                               5));
  }

  ksp::ModelConfig m;
  m.num_aus = 4;
  m.clip_len = 3;
  m.feature_width = 8;
  m.channels = 2;
  m.head_dim = 4;
  m.encoder_layers = 1;
  m.image_height = 8;
  m.image_width = 8;
  m.backbone_widths = {4, 6};
  torch::manual_seed(8);
  ksp::KnowledgeSpreader net(m);
  net->to(torch::kFloat64);
  auto key = torch::rand({2, 1, 8, 8}, kF64);
  auto clip = torch::rand({2, 3, 1, 8, 8}, kF64);
  auto params = [](torch::nn::Module& mod) { return mod.parameters(); };
  errs.emplace_back("backbone", fd_check(params(*net->backbone_a),
                                         [&] { return project({net->backbone_a->forward(key)}); }, 11));
  auto map = net->backbone_a->forward(key).detach();
  errs.emplace_back("spatial_teacher",
                    fd_check(params(*net->spatial_teacher),
                             [&] { return project({net->spatial_teacher->forward(map).logits}); }, 12));
  auto feats = net->frame_features(clip).detach().select(1, 0);
  auto& student = net->students[0];
  errs.emplace_back("spatial_student", fd_check(params(*student), [&] {
                      auto o = student->forward(feats, false);
                      return project({o.logits, o.feature});
                    }, 13));
  auto tokens = torch::rand({2, 3, m.feature_width}, kF64);
  errs.emplace_back("temporal_teacher", fd_check(params(*net->temporal_teacher), [&] {
                      auto o = net->temporal_teacher->forward(tokens, 1);
                      return project({o.au_logits, o.ssl_logit});
                    }, 14));
  const std::vector<std::vector<int>> perms{{1, 2, 0}, {2, 1, 0}};
  errs.emplace_back("full_model", fd_check(params(*net), [&] {
                      auto o = net->forward(key, clip, 2, false, perms);
                      return project({o.o_output, o.o_ps, o.o_k, o.o_ssl, o.o_ssl_shuffled});
                    }, 15));

  bool pass = true;
  double worst = 0.0;
  std::string name;
  for (const auto& [k, e] : errs) {
    pass = pass && e <= kGradRelTol;
    if (e >= worst) {
      worst = e;
      name = k;
    }
  }
  return {pass, std::to_string(errs.size()) + " checks x " + std::to_string(kFdCoords) +
                    " coords, worst rel err " + fmt(worst, 8) + " (" + name + ")"};
}

Outcome criterion3(Shared&) {
  ksp::SynthConfig s;
  s.num_sequences = 4;
  s.frames_per_sequence = 24;
  s.num_aus = 3;
  s.image_height = 8;
  s.image_width = 8;
  s.couplings = {{0, 1, 0.8}};
  s.min_event_frames = 3;
  s.mean_event_frames = 5;
  s.seed = 2;
  const auto corpus = ksp::sample_sparse_labels(ksp::generate_corpus(s), 0.25, ksp::SampleMode::kStrided);
  ksp::ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.model.num_aus = 3;
  cfg.model.feature_width = 8;
  cfg.model.channels = 2;
  cfg.model.head_dim = 4;
  cfg.model.encoder_layers = 1;
  cfg.model.image_height = 8;
  cfg.model.image_width = 8;
  cfg.model.backbone_widths = {4, 6};
  cfg.hp.lr = 0.05;
  cfg.options.augment = false;
  const int n = cfg.model.clip_len;

  ksp::Trainer trainer(cfg, {1.0, 1.0, 1.0});
  std::vector<int> keys;
  std::size_t gated_nonzero = 0, gated = 0, accepted = 0;
  const int steps = 5 * n;
  for (int step = 0; step < steps; ++step) {
    // Epochs 1..5 across the run so inactive, rejected and accepted clips all occur.
    trainer.set_epoch(1 + step * 5 / steps);
    const int key = trainer.scheduled_key_pos();
    std::vector<ksp::ClipSample> batch;
    for (int i = 0; i < 4; ++i) {
      const auto& seq = corpus.sequences[(step + i) % corpus.sequences.size()];
      batch.push_back(ksp::make_clip(seq, 4 * ((step + i) % 6), n, key));
    }
    const auto res = trainer.training_step(batch);
    keys.push_back(res.key_pos);
    for (std::size_t i = 0; i < res.verdicts.size(); ++i) {
      if (res.verdicts[i] == ksp::TplVerdict::kAccepted) {
        ++accepted;
        continue;
      }
      ++gated;
      gated_nonzero += res.semi_per_clip[i] != 0.0;
    }
  }
  bool rotation = true;
  for (int w = 0; w < 5; ++w) {
    std::set<int> heads(keys.begin() + w * n, keys.begin() + (w + 1) * n);
    rotation = rotation && heads.size() == static_cast<std::size_t>(n) && *heads.begin() == 0 &&
               *heads.rbegin() == n - 1;
  }
  return {rotation && gated_nonzero == 0 && gated > 0,
          std::to_string(steps) + " steps, rotation " + (rotation ? "ok" : "broken") + ", " +
              std::to_string(gated) + " gated clips with " + std::to_string(gated_nonzero) +
              " nonzero L_semi, " + std::to_string(accepted) + " accepted"};
}

Outcome criterion4(Shared& sh) {
  const auto& full = sh.cache.get(sh.labeled10, desk_preset(1)).report;
  const auto& notpl =
      sh.cache.get(sh.labeled10, ksp::apply_ablation(desk_preset(1), ksp::Ablation::kNoTpl)).report;
  if (full.epochs.size() < 2) return {false, "fewer than 2 epochs"};
  const double tpl = full.epochs[1].tpl_val_accuracy;
  const double gain = full.pseudo_accuracy - notpl.pseudo_accuracy;
  return {tpl >= kTplAccuracyMin && gain >= kPseudoGainMin,
          "TPL val accuracy after epoch 2 " + fmt(tpl) + " (min " + fmt(kTplAccuracyMin, 2) +
              "), pseudo-label accuracy " + fmt(full.pseudo_accuracy) + " with TPL vs " +
              fmt(notpl.pseudo_accuracy) + " without, gain " + fmt(100 * gain, 2) +
              " pp (min 1.00), TPL acceptance " + fmt(full.pseudo_acceptance_rate)};
}

Outcome criterion5(Shared& sh) {
  std::vector<double> full, base;
  double secs = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto& f = sh.cache.get(sh.labeled10, desk_preset(seed));
    const auto& b =
        sh.cache.get(sh.labeled10, ksp::apply_ablation(desk_preset(seed), ksp::Ablation::kBaseline));
    full.push_back(f.report.final_val.macro_f1);
    base.push_back(b.report.final_val.macro_f1);
    secs += f.seconds + b.seconds;
  }
  const double gap = ksp::median(full) - ksp::median(base);
  return {gap >= kBaselineGapMin && secs <= kCriterion5Seconds,
          "median macro F1 full " + fmt(ksp::median(full)) + " vs baseline " +
              fmt(ksp::median(base)) + ", gap " + fmt(100 * gap, 2) + " points (min 3), " +
              fmt(secs, 1) + " s of training (max 600)"};
}

Outcome criterion6(Shared& sh) {
  const auto rows = ksp::ablation_table(sh.corpus, desk_preset(0), 0.05, {1, 2, 3},
                                        sh.cache.factory());
  bool pass = true;
  std::ostringstream detail;
  for (const auto& r : rows) {
    detail << r.variant << " " << fmt(r.median_f1) << (r.variant == "baseline" ? "" : ", ");
    if (r.variant == "KSM+TPL" || r.variant == "SIL+TPL" || r.variant == "SIL+KSM")
      pass = pass && rows.front().median_f1 >= r.median_f1;
  }
  return {pass, "median macro F1 at 5%: " + detail.str()};
}

Outcome criterion7(Shared& sh) {
  const std::vector<ksp::SampleMode> modes{ksp::SampleMode::kStrided, ksp::SampleMode::kContiguous};
  const auto a = ksp::coverage_statistics(sh.corpus, {0.1}, modes);
  const auto b = ksp::coverage_statistics(sh.corpus, {0.1}, modes);
  const bool same = ksp::coverage_csv(a) == ksp::coverage_csv(b);
  return {same && a[0].unique_count > a[1].unique_count,
          "unique label combinations strided " + std::to_string(a[0].unique_count) +
              " vs contiguous " + std::to_string(a[1].unique_count) + " (" +
              std::to_string(a[0].label_count) + " labels each), repeat " +
              (same ? "identical" : "differs")};
}

Outcome criterion8(Shared& sh) {
  const auto rows = ksp::clip_length_sweep(sh.labeled10, desk_preset(0), {5, 2}, {1, 2, 3},
                                           sh.cache.factory());
  return {rows[0].median_f1 >= rows[1].median_f1,
          "median macro F1 n=5 " + fmt(rows[0].median_f1) + " vs n=2 " + fmt(rows[1].median_f1)};
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" KSP_CLI_PATH "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion9(Shared&) {
  const auto dir = fs::temp_directory_path() / "ksp_acceptance_replay";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto c = (dir / "corpus").string(), a = (dir / "run").string(),
             b = (dir / "replay").string();
  if (run_cli("gen-data --out " + c + " --sequences 6 --frames 40 --seed 3") != 0)
    return {false, "gen-data failed"};
  if (run_cli("train --corpus " + c + " --run-dir " + a +
              " --epochs 4 --batch-size 4 --lr 0.1 --grad-clip-norm 1 --seed 11") != 0)
    return {false, "train failed"};
  if (run_cli("train --replay " + a + "/manifest.json --run-dir " + b) != 0)
    return {false, "replay failed"};
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const auto ma = slurp(a + "/metrics.csv"), mb = slurp(b + "/metrics.csv");
  const auto lines = std::count(ma.begin(), ma.end(), '\n');
  fs::remove_all(dir);
  return {!ma.empty() && ma == mb,
          "metrics.csv " + std::to_string(ma.size()) + " bytes, " + std::to_string(lines) +
              " lines, replay " + (ma == mb ? "byte-identical" : "differs")};
}

}  // namespace

int main() {
  torch::set_num_threads(1);
  const auto t0 = Clock::now();
  Shared sh;
  sh.corpus = ksp::generate_corpus(ksp::SynthConfig{});
  sh.labeled10 = ksp::sample_sparse_labels(sh.corpus, 0.1, ksp::SampleMode::kStrided);

  const std::vector<std::function<Outcome(Shared&)>> criteria{
      criterion1, criterion2, criterion3, criterion4, criterion5,
      criterion6, criterion7, criterion8, criterion9};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto ti = Clock::now();
    Outcome o;
    try {
      o = criteria[i](sh);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << " [" << fmt(seconds_since(ti), 1) << " s]" << std::endl;
  }
  const double total = seconds_since(t0);
  std::cout << "total runtime " << fmt(total, 1) << " s (budget " << fmt(kSuiteSeconds, 0)
            << " s)" << (total > kSuiteSeconds ? " EXCEEDED" : "") << std::endl;
  return failed == 0 && total <= kSuiteSeconds ? 0 : 1;
}
