// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors
//
// ksp: command-line entry point.
//
//   ksp gen-data --out DIR [--seed N] ...
//   ksp train    --corpus DIR [--config FILE] [--<config-key> VALUE ...] [--ablate V]
//   ksp train    --replay runs/<name>/manifest.json [--run-dir DIR]
//   ksp eval     --checkpoint FILE --corpus DIR
//   ksp ablate   --corpus DIR [--seeds 1,2,3]
//   ksp sweep    --corpus DIR [--ratios 0.05,0.1] [--modes strided,contiguous]
//   ksp coverage [--corpus DIR] [--ratios 0.1,0.2] [--modes strided,contiguous]
//
// Config precedence: built-in defaults < --config file < KSP_SEED < flags.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ksp/core.hpp"
#include "ksp/experiments.hpp"
#include "ksp/synthdata.hpp"
#include "ksp/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitData = 4;
constexpr int kExitInterrupted = 130;

void on_sigint(int) { ksp::request_stop(); }

std::string flag_name(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

/// One `--<key>` option per config key; values are applied after the config file.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "Config file (key = value lines)");
    const ksp::ExperimentConfig defaults;
    for (const auto& key : ksp::config_keys()) {
      options[key] = app->add_option(flag_name(key), values[key],
                                     "Config key " + key + " (default " +
                                         ksp::config_value(defaults, key) + ")");
    }
  }

  [[nodiscard]] ksp::ExperimentConfig resolve() const {
    ksp::ExperimentConfig cfg;
    if (!config_file.empty()) cfg = ksp::load_config_file(config_file);
    if (auto s = ksp::seed_from_env()) cfg.seed = *s;
    for (const auto& key : ksp::config_keys())
      if (options.at(key)->count() > 0) ksp::apply_config_value(cfg, key, values.at(key));
    ksp::validate(cfg);
    return cfg;
  }
};

std::vector<double> parse_ratios(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ksp::ConfigError("invalid ratio '" + item + "'");
    }
  }
  if (out.empty()) throw ksp::ConfigError("empty ratio list");
  return out;
}

std::vector<ksp::SampleMode> parse_modes(const std::string& csv) {
  std::vector<ksp::SampleMode> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(ksp::parse_sample_mode(item));
  if (out.empty()) throw ksp::ConfigError("empty mode list");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ksp::ConfigError("invalid seed '" + item + "'");
    }
  }
  if (out.empty()) throw ksp::ConfigError("empty seed list");
  return out;
}

std::string git_describe() {
#ifdef KSP_SOURCE_DIR
  const std::string cmd =
      "git -C \"" KSP_SOURCE_DIR "\" describe --always --dirty --tags 2>/dev/null";
  if (FILE* p = popen(cmd.c_str(), "r")) {
    char buf[256] = {};
    std::string out;
    while (fgets(buf, sizeof(buf), p) != nullptr) out += buf;
    pclose(p);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    if (!out.empty()) return out;
  }
#endif
  return "unknown";
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw ksp::ConfigError("cannot write '" + path + "'");
  out << text;
}

ksp::LabeledCorpus load_labeled(const std::string& dir, const ksp::ExperimentConfig& cfg) {
  return ksp::sample_sparse_labels(ksp::load_corpus(dir), cfg.options.label_ratio,
                                   cfg.options.sample_mode);
}

void copy_image_shape(const ksp::LabeledCorpus& corpus, ksp::ExperimentConfig& cfg,
                      const ConfigFlags& flags) {
  // Shape keys follow the corpus unless given explicitly.
  auto unset = [&](const char* key) {
    return flags.options.at(key)->count() == 0 && flags.config_file.empty();
  };
  if (unset("num_aus")) cfg.model.num_aus = corpus.num_aus;
  if (unset("image_height")) cfg.model.image_height = corpus.image_height;
  if (unset("image_width")) cfg.model.image_width = corpus.image_width;
  if (unset("image_channels")) cfg.model.image_channels = corpus.image_channels;
}

int run_training(const ksp::ExperimentConfig& cfg, const std::string& ablation,
                 const std::string& corpus_dir, const std::string& run_dir, bool quiet) {
  const auto labeled = load_labeled(corpus_dir, cfg);
  fs::create_directories(run_dir);
  json manifest = {{"command", "train"},
                   {"config", ksp::to_config_text(cfg)},
                   {"seed", cfg.seed},
                   {"ablation", ablation},
                   {"git_describe", git_describe()},
                   {"corpus", fs::absolute(corpus_dir).string()},
                   {"corpus_hash", ksp::corpus_hash(corpus_dir)},
                   {"out_dir", fs::absolute(run_dir).string()}};
  write_text((fs::path(run_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  ksp::save_config_file(cfg, (fs::path(run_dir) / "config.cfg").string());

  std::signal(SIGINT, on_sigint);
  const auto result = ksp::train(labeled, cfg, {run_dir, quiet});
  std::signal(SIGINT, SIG_DFL);
  if (result.report.interrupted) {
    std::cerr << "interrupted; checkpoint written to " << run_dir << "/interrupted.ckpt\n";
    return kExitInterrupted;
  }
  std::cout << "macro_f1 " << ksp::format_double(result.report.final_val.macro_f1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-spreader training and evaluation on synthetic AU video"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic AU video corpus");
  std::string gen_out, gen_cfg_file;
  std::uint64_t gen_seed = 0;
  ksp::SynthConfig synth;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--synth-config", gen_cfg_file, "Corpus config file (as written to corpus.cfg)");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Generator seed (default 0)");
  gen->add_option("--sequences", synth.num_sequences, "Number of sequences")->capture_default_str();
  gen->add_option("--frames", synth.frames_per_sequence, "Frames per sequence")
      ->capture_default_str();
  gen->add_option("--num-aus", synth.num_aus, "Number of AUs")->capture_default_str();
  gen->add_option("--noise-std", synth.noise_std, "Pixel noise std")->capture_default_str();
  gen->add_option("--au-amplitude", synth.au_amplitude, "AU blob peak brightness")
      ->capture_default_str();
  gen->add_option("--active-prob", synth.active_prob, "Stationary AU activity")
      ->capture_default_str();
  gen->add_option("--min-event-frames", synth.min_event_frames, "Shortest on/off run")
      ->capture_default_str();
  gen->add_option("--mean-event-frames", synth.mean_event_frames, "Mean on-run length")
      ->capture_default_str();
  gen->add_option("--desync-prob", synth.desync_prob, "Per-frame desync probability")
      ->capture_default_str();
  gen->add_option("--motion-amplitude", synth.motion_amplitude, "Marker peak brightness")
      ->capture_default_str();
  gen->add_option("--motion-speed", synth.motion_speed, "Marker speed, pixels per frame")
      ->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model; writes runs/<name>/");
  ConfigFlags tr_flags;
  tr_flags.attach(tr);
  std::string tr_corpus, tr_out = "runs", tr_name = "run", tr_ablate = "none", tr_replay,
                         tr_run_dir;
  bool tr_verbose = false;
  tr->add_option("--corpus", tr_corpus, "Corpus directory from gen-data");
  tr->add_option("--ablate", tr_ablate, "Ablation variant")
      ->check(CLI::IsMember({"none", "no-sil", "no-ksm", "no-tpl", "baseline"}))
      ->capture_default_str();
  tr->add_option("--out", tr_out, "Parent directory of run directories")->capture_default_str();
  tr->add_option("--name", tr_name, "Run name")->capture_default_str();
  tr->add_option("--run-dir", tr_run_dir, "Exact run directory (overrides --out/--name)");
  tr->add_option("--replay", tr_replay, "Replay the run described by a manifest.json");
  tr->add_flag("-v,--verbose", tr_verbose, "Per-epoch progress on stderr");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  std::string ev_ckpt, ev_corpus, ev_split = "val", ev_out;
  std::uint64_t ev_seed = 0;
  int ev_stride = 1;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--corpus", ev_corpus, "Corpus directory")->required();
  ev->add_option("--split", ev_split, "Sequences to score")
      ->check(CLI::IsMember({"val", "all"}))
      ->capture_default_str();
  ev->add_option("--seed", ev_seed, "Key-position seed")->capture_default_str();
  ev->add_option("--stride", ev_stride, "Score every stride-th frame")->capture_default_str();
  ev->add_option("--out", ev_out, "Report JSON path (stdout if omitted)");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Ablation table over seeds");
  ConfigFlags ab_flags;
  ab_flags.attach(ab);
  std::string ab_corpus, ab_seeds = "1,2,3", ab_out;
  ab->add_option("--corpus", ab_corpus, "Corpus directory")->required();
  ab->add_option("--seeds", ab_seeds, "Comma-separated seeds")->capture_default_str();
  ab->add_option("--report", ab_out, "CSV path (stdout if omitted)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Label-budget sweep");
  ConfigFlags sw_flags;
  sw_flags.attach(sw);
  std::string sw_corpus, sw_ratios = "0.05,0.1,0.5", sw_modes = "strided", sw_out;
  sw->add_option("--corpus", sw_corpus, "Corpus directory")->required();
  sw->add_option("--ratios", sw_ratios, "Comma-separated label ratios")->capture_default_str();
  sw->add_option("--modes", sw_modes, "Comma-separated sampling modes")->capture_default_str();
  sw->add_option("--report", sw_out, "CSV path (stdout if omitted)");

  // coverage
  auto* cv = app.add_subcommand("coverage", "Unique label combinations per budget and mode");
  std::string cv_corpus, cv_ratios = "0.1", cv_modes = "strided,contiguous", cv_out;
  std::uint64_t cv_seed = 0;
  cv->add_option("--corpus", cv_corpus, "Corpus directory (generated in memory if omitted)");
  cv->add_option("--seed", cv_seed, "Seed for the in-memory corpus")->capture_default_str();
  cv->add_option("--ratios", cv_ratios, "Comma-separated label ratios")->capture_default_str();
  cv->add_option("--modes", cv_modes, "Comma-separated sampling modes")->capture_default_str();
  cv->add_option("--out", cv_out, "CSV path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen) {
      if (!gen_cfg_file.empty()) {
        std::ifstream in(gen_cfg_file);
        if (!in) throw ksp::ConfigError("cannot open '" + gen_cfg_file + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        synth = ksp::parse_synth_config_text(ss.str());
      }
      if (auto s = ksp::seed_from_env()) synth.seed = *s;
      if (gen_seed_opt->count() > 0) synth.seed = gen_seed;
      ksp::validate(synth);
      ksp::save_corpus(ksp::generate_corpus(synth), synth, gen_out);
      std::cout << "corpus " << gen_out << " hash " << ksp::corpus_hash(gen_out) << "\n";
      return 0;
    }

    if (*tr) {
      if (!tr_replay.empty()) {
        std::ifstream in(tr_replay);
        if (!in) throw ksp::ConfigError("cannot open manifest '" + tr_replay + "'");
        const json m = json::parse(in);
        const auto cfg = ksp::parse_config_text(m.at("config").get<std::string>());
        const auto corpus = tr_corpus.empty() ? m.at("corpus").get<std::string>() : tr_corpus;
        if (ksp::corpus_hash(corpus) != m.at("corpus_hash").get<std::string>())
          throw ksp::DataError("corpus hash differs from the manifest");
        const std::string run_dir =
            tr_run_dir.empty() ? m.at("out_dir").get<std::string>() + "-replay" : tr_run_dir;
        return run_training(cfg, m.value("ablation", "none"), corpus, run_dir, !tr_verbose);
      }
      if (tr_corpus.empty()) throw CLI::RequiredError("--corpus");
      auto cfg = tr_flags.resolve();
      copy_image_shape(ksp::load_corpus(tr_corpus), cfg, tr_flags);
      cfg = ksp::apply_ablation(cfg, ksp::parse_ablation(tr_ablate));
      ksp::validate(cfg);
      const std::string run_dir =
          tr_run_dir.empty() ? (fs::path(tr_out) / tr_name).string() : tr_run_dir;
      return run_training(cfg, tr_ablate, tr_corpus, run_dir, !tr_verbose);
    }

    if (*ev) {
      auto ckpt = ksp::load_checkpoint(ev_ckpt);
      auto corpus = ksp::load_corpus(ev_corpus);
      if (ev_split == "val") {
        const auto split = ksp::split_sequences(static_cast<int>(corpus.sequences.size()),
                                                ckpt.config.options.val_fraction);
        corpus = corpus.subset(split.second);
      }
      const auto report = ksp::evaluate_corpus(ckpt.model, corpus, ev_seed, ev_stride);
      const double tpl = ksp::tpl_accuracy(ckpt.model, corpus, ev_seed, ev_stride);
      const json out = {{"checkpoint", ev_ckpt},
                        {"split", ev_split},
                        {"macro_f1", report.macro_f1},
                        {"per_au_f1", report.per_au_f1},
                        {"support", report.support},
                        {"tpl_accuracy", tpl}};
      write_text(ev_out, out.dump(2) + "\n");
      return 0;
    }

    if (*ab) {
      auto cfg = ab_flags.resolve();
      const auto corpus = ksp::load_corpus(ab_corpus);
      copy_image_shape(corpus, cfg, ab_flags);
      const auto rows =
          ksp::ablation_table(corpus, cfg, cfg.options.label_ratio, parse_seeds(ab_seeds));
      write_text(ab_out, ksp::ablation_csv(rows));
      return 0;
    }

    if (*sw) {
      auto cfg = sw_flags.resolve();
      const auto corpus = ksp::load_corpus(sw_corpus);
      copy_image_shape(corpus, cfg, sw_flags);
      const auto rows =
          ksp::label_budget_sweep(corpus, cfg, parse_ratios(sw_ratios), parse_modes(sw_modes));
      write_text(sw_out, ksp::sweep_csv(rows));
      return 0;
    }

    if (*cv) {
      ksp::LabeledCorpus corpus;
      if (cv_corpus.empty()) {
        ksp::SynthConfig sc;
        sc.seed = cv_seed;
        corpus = ksp::generate_corpus(sc);
      } else {
        corpus = ksp::load_corpus(cv_corpus);
      }
      const auto rows =
          ksp::coverage_statistics(corpus, parse_ratios(cv_ratios), parse_modes(cv_modes));
      write_text(cv_out, ksp::coverage_csv(rows));
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ksp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ksp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
