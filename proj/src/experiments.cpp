// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#include "ksp/experiments.hpp"

#include <algorithm>
#include <sstream>

namespace ksp {

ModelFactory default_factory() {
  return [](const LabeledCorpus& labeled, const ExperimentConfig& cfg) {
    return train(labeled, cfg).report;
  };
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::vector<SweepRow> label_budget_sweep(const LabeledCorpus& corpus, const ExperimentConfig& cfg,
                                         std::vector<double> ratios,
                                         const std::vector<SampleMode>& modes,
                                         const ModelFactory& factory) {
  for (double r : ratios)
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("label ratio must lie in (0, 1]");
  ratios.erase(std::remove(ratios.begin(), ratios.end(), 1.0), ratios.end());
  std::vector<SweepRow> rows;
  auto run = [&](double ratio, SampleMode mode) {
    ExperimentConfig c = cfg;
    c.options.label_ratio = ratio;
    c.options.sample_mode = mode;
    const auto labeled = sample_sparse_labels(corpus, ratio, mode);
    SweepRow row{ratio, mode, labeled.num_visible(), factory(labeled, c).final_val.macro_f1};
    rows.push_back(row);
  };
  run(1.0, SampleMode::kStrided);
  for (double r : ratios)
    for (SampleMode m : modes) run(r, m);
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "ratio,mode,label_count,macro_f1\n";
  for (const auto& r : rows)
    os << format_double(r.ratio) << "," << to_string(r.mode) << "," << r.label_count << ","
       << format_double(r.macro_f1) << "\n";
  return os.str();
}

std::string variant_name(Ablation a) {
  switch (a) {
    case Ablation::kNone:
      return "full";
    case Ablation::kNoSil:
      return "KSM+TPL";
    case Ablation::kNoKsm:
      return "SIL+TPL";
    case Ablation::kNoTpl:
      return "SIL+KSM";
    case Ablation::kBaseline:
      return "baseline";
  }
  return "full";
}

std::vector<AblationRow> ablation_table(const LabeledCorpus& corpus, const ExperimentConfig& cfg,
                                        double label_ratio, const std::vector<std::uint64_t>& seeds,
                                        const ModelFactory& factory) {
  ExperimentConfig base = cfg;
  base.options.label_ratio = label_ratio;
  base.options.sample_mode = SampleMode::kStrided;
  const auto labeled = sample_sparse_labels(corpus, label_ratio, SampleMode::kStrided);
  std::vector<AblationRow> rows;
  for (Ablation a : {Ablation::kNone, Ablation::kNoSil, Ablation::kNoKsm, Ablation::kNoTpl,
                     Ablation::kBaseline}) {
    AblationRow row;
    row.variant = variant_name(a);
    row.ablation = a;
    for (auto seed : seeds) {
      ExperimentConfig c = apply_ablation(base, a);
      c.seed = seed;
      const auto report = factory(labeled, c);
      row.seeds.push_back(seed);
      row.macro_f1.push_back(report.final_val.macro_f1);
      row.pseudo_accuracy.push_back(report.pseudo_accuracy);
    }
    row.median_f1 = median(row.macro_f1);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant,seed,macro_f1,pseudo_accuracy\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.seeds.size(); ++i)
      os << r.variant << "," << r.seeds[i] << "," << format_double(r.macro_f1[i]) << ","
         << format_double(r.pseudo_accuracy[i]) << "\n";
    os << r.variant << ",median," << format_double(r.median_f1) << ",\n";
  }
  return os.str();
}

std::vector<ClipLengthRow> clip_length_sweep(const LabeledCorpus& corpus,
                                             const ExperimentConfig& cfg,
                                             const std::vector<int>& clip_lengths,
                                             const std::vector<std::uint64_t>& seeds,
                                             const ModelFactory& factory) {
  std::vector<ClipLengthRow> rows;
  for (int n : clip_lengths) {
    ClipLengthRow row;
    row.clip_len = n;
    for (auto seed : seeds) {
      ExperimentConfig c = cfg;
      c.hp.clip_len = n;
      c.model.clip_len = n;
      c.seed = seed;
      row.macro_f1.push_back(factory(corpus, c).final_val.macro_f1);
    }
    row.median_f1 = median(row.macro_f1);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ksp
