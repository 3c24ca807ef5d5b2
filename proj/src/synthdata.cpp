// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#include "ksp/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace ksp {

std::size_t LabeledCorpus::num_visible() const {
  std::size_t n = 0;
  for (const auto& s : sequences)
    n += static_cast<std::size_t>(std::count(s.visible.begin(), s.visible.end(), 1));
  return n;
}

std::vector<AULabelVector> LabeledCorpus::visible_labels() const {
  std::vector<AULabelVector> out;
  for (const auto& s : sequences)
    for (int t = 0; t < s.num_frames(); ++t)
      if (s.visible[t]) out.push_back(*s.frames[t].label);
  return out;
}

LabeledCorpus LabeledCorpus::subset(const std::vector<int>& indices) const {
  LabeledCorpus out = *this;
  out.sequences.clear();
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(sequences.size()))
      throw DataError("subset: sequence index out of range");
    out.sequences.push_back(sequences[i]);
  }
  return out;
}

void validate(const SynthConfig& cfg) {
  if (cfg.num_sequences < 1) throw ConfigError("num_sequences must be >= 1");
  if (cfg.frames_per_sequence < 2) throw ConfigError("frames_per_sequence must be >= 2");
  if (cfg.num_aus < 2) throw ConfigError("num_aus must be >= 2");
  if (cfg.image_height < 4 || cfg.image_width < 4 || cfg.image_channels < 1)
    throw ConfigError("image must be at least 4x4 with one channel");
  if (cfg.min_event_frames < 2) throw ConfigError("min_event_frames must be >= 2");
  if (cfg.mean_event_frames < cfg.min_event_frames)
    throw ConfigError("mean_event_frames must be >= min_event_frames");
  if (cfg.active_prob < 0.0 || cfg.active_prob > 1.0)
    throw ConfigError("active_prob must be in [0, 1]");
  if (cfg.noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  if (cfg.motion_speed < 0.0) throw ConfigError("motion_speed must be non-negative");
  if (cfg.motion_amplitude < 0.0) throw ConfigError("motion_amplitude must be non-negative");
  if (cfg.desync_prob < 0.0 || cfg.desync_prob > 1.0)
    throw ConfigError("desync_prob must be in [0, 1]");
  for (const auto& c : cfg.couplings)
    if (c.probability < 0.0 || c.probability > 1.0)
      throw ConfigError("coupling probability must be in [0, 1]");
}

namespace {

void check_couplings(const SynthConfig& cfg) {
  std::vector<int> leader_of(cfg.num_aus, -1);
  for (const auto& c : cfg.couplings) {
    if (c.leader < 0 || c.leader >= cfg.num_aus || c.follower < 0 || c.follower >= cfg.num_aus)
      throw DataError("coupling references an AU outside [0, num_aus)");
    if (c.leader == c.follower) throw DataError("coupling of an AU with itself");
    if (leader_of[c.follower] != -1)
      throw DataError("AU " + std::to_string(c.follower) +
                      " is driven by two couplings; demands cannot both be met");
    leader_of[c.follower] = c.leader;
  }
  for (int u = 0; u < cfg.num_aus; ++u) {
    int cur = u;
    for (int steps = 0; leader_of[cur] != -1; ++steps) {
      if (steps > cfg.num_aus) throw DataError("cyclic AU couplings");
      cur = leader_of[cur];
    }
  }
}

std::vector<std::uint8_t> semi_markov_signal(const SynthConfig& cfg, std::mt19937_64& rng) {
  const int frames = cfg.frames_per_sequence;
  const double a = cfg.active_prob;
  if (a >= 1.0) return std::vector<std::uint8_t>(frames, 1);
  if (a <= 0.0) return std::vector<std::uint8_t>(frames, 0);

  const double mean_on = cfg.mean_event_frames;
  const double mean_off = std::max<double>(cfg.min_event_frames, mean_on * (1.0 - a) / a);
  auto draw = [&](bool on) {
    const double extra = (on ? mean_on : mean_off) - cfg.min_event_frames;
    int len = cfg.min_event_frames;
    if (extra > 0.0) len += std::geometric_distribution<int>(1.0 / (1.0 + extra))(rng);
    return len;
  };

  std::vector<std::uint8_t> signal(frames);
  bool on = std::bernoulli_distribution(a)(rng);
  int first = draw(on);
  int remaining = std::uniform_int_distribution<int>(1, first)(rng);
  for (int t = 0; t < frames; ++t) {
    if (remaining == 0) {
      on = !on;
      remaining = draw(on);
    }
    signal[t] = on ? 1 : 0;
    --remaining;
  }
  return signal;
}

struct Run {
  int begin;
  int length;
};

std::vector<Run> runs_of(const std::vector<std::uint8_t>& s) {
  std::vector<Run> runs;
  int begin = 0;
  for (int t = 1; t <= static_cast<int>(s.size()); ++t) {
    if (t == static_cast<int>(s.size()) || s[t] != s[begin]) {
      runs.push_back({begin, t - begin});
      begin = t;
    }
  }
  return runs;
}

// Interior runs shorter than min_len are flipped into their neighbours.
void enforce_min_runs(std::vector<std::uint8_t>& s, int min_len) {
  for (;;) {
    const auto runs = runs_of(s);
    bool changed = false;
    for (std::size_t i = 1; i + 1 < runs.size(); ++i) {
      if (runs[i].length < min_len) {
        for (int t = runs[i].begin; t < runs[i].begin + runs[i].length; ++t) s[t] ^= 1;
        changed = true;
        break;
      }
    }
    if (!changed) return;
  }
}

struct Layout {
  int au_rows;
  int cols;
  int rows;
  int cell_h;
  int cell_w;
};

Layout layout_for(int num_aus, int height, int width) {
  Layout l{};
  l.au_rows = height - 4;
  l.cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_aus))));
  l.rows = (num_aus + l.cols - 1) / l.cols;
  l.cell_h = std::max(1, l.au_rows / l.rows);
  l.cell_w = std::max(1, width / l.cols);
  return l;
}

double marker_position(double phase, double speed, int t, int width) {
  const double lo = 1.0;
  const double span = static_cast<double>(width) - 3.0;
  const double period = 2.0 * span;
  double m = std::fmod(phase + speed * t, period);
  if (m < 0) m += period;
  return lo + (m < span ? m : period - m);
}

}  // namespace

std::vector<std::vector<std::uint8_t>> generate_activations(const SynthConfig& cfg,
                                                            std::uint64_t seq_seed) {
  check_couplings(cfg);
  std::mt19937_64 rng(seq_seed);
  std::vector<std::vector<std::uint8_t>> act(cfg.num_aus);
  for (int u = 0; u < cfg.num_aus; ++u) act[u] = semi_markov_signal(cfg, rng);

  std::vector<const Coupling*> driver(cfg.num_aus, nullptr);
  for (const auto& c : cfg.couplings) driver[c.follower] = &c;
  std::vector<bool> resolved(cfg.num_aus, false);

  auto resolve = [&](auto&& self, int u) -> void {
    if (resolved[u]) return;
    resolved[u] = true;
    const Coupling* c = driver[u];
    if (c == nullptr) return;
    self(self, c->leader);
    const auto& lead = act[c->leader];
    auto& own = act[u];
    std::bernoulli_distribution copy(c->probability);
    for (const auto& run : runs_of(lead)) {
      if (copy(rng))
        std::fill(own.begin() + run.begin, own.begin() + run.begin + run.length, lead[run.begin]);
    }
    enforce_min_runs(own, cfg.min_event_frames);
  };
  for (int u = 0; u < cfg.num_aus; ++u) resolve(resolve, u);
  return act;
}

LabeledCorpus generate_corpus(const SynthConfig& cfg) {
  validate(cfg);
  check_couplings(cfg);

  const int height = cfg.image_height, width = cfg.image_width, chans = cfg.image_channels;
  const int frames = cfg.frames_per_sequence;
  const Layout lay = layout_for(cfg.num_aus, height, width);
  const std::size_t frame_size = static_cast<std::size_t>(height) * width * chans;

  LabeledCorpus corpus;
  corpus.num_aus = cfg.num_aus;
  corpus.image_height = height;
  corpus.image_width = width;
  corpus.image_channels = chans;
  corpus.label_ratio = 1.0;
  corpus.mode = SampleMode::kStrided;

  for (int i = 0; i < cfg.num_sequences; ++i) {
    const auto act = generate_activations(cfg, derive_seed(cfg.seed, 2 * i + 1));
    std::mt19937_64 rng(derive_seed(cfg.seed, 2 * i + 2));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Per-sequence subject appearance.
    const double background = 0.15 + 0.2 * unit(rng);
    const double amp_scale = 0.7 + 0.6 * unit(rng);
    const double phase = unit(rng) * 2.0 * (width - 3.0);
    const double speed = cfg.motion_speed * (0.75 + 0.5 * unit(rng));
    std::vector<double> texture(static_cast<std::size_t>(height) * width);
    for (auto& v : texture) v = 0.05 * (unit(rng) - 0.5);
    std::vector<double> chan_gain(chans);
    for (int c = 0; c < chans; ++c) chan_gain[c] = c == 0 ? 1.0 : 0.6 + 0.4 * unit(rng);

    // Source time index for every frame's pixels.
    std::vector<int> source(frames);
    std::bernoulli_distribution desync(cfg.desync_prob);
    std::uniform_int_distribution<int> offset(2 * cfg.min_event_frames, 4 * cfg.min_event_frames);
    for (int t = 0; t < frames; ++t) {
      source[t] = t;
      if (desync(rng)) {
        const int d = offset(rng);
        const int sign = unit(rng) < 0.5 ? -1 : 1;
        int s = t + sign * d;
        if (s < 0 || s >= frames) s = t - sign * d;
        source[t] = std::clamp(s, 0, frames - 1);
      }
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    Sequence seq;
    seq.id = i;
    seq.frames.resize(frames);
    seq.visible.assign(frames, 1);
    for (int t = 0; t < frames; ++t) {
      const int src = source[t];
      std::vector<double> plane(static_cast<std::size_t>(height) * width);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) plane[y * width + x] = background + texture[y * width + x];

      for (int u = 0; u < cfg.num_aus; ++u) {
        if (!act[u][src]) continue;
        const int r = u / lay.cols, c = u % lay.cols;
        const double cy = r * lay.cell_h + (lay.cell_h - 1) / 2.0;
        const double cx = c * lay.cell_w + (lay.cell_w - 1) / 2.0;
        const double sigma = 0.35 * std::min(lay.cell_h, lay.cell_w);
        for (int y = r * lay.cell_h; y < std::min((r + 1) * lay.cell_h, lay.au_rows); ++y) {
          for (int x = c * lay.cell_w; x < std::min((c + 1) * lay.cell_w, width); ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            plane[y * width + x] += cfg.au_amplitude * amp_scale * std::exp(-d2 / (2 * sigma * sigma));
          }
        }
      }

      if (cfg.motion_speed > 0.0) {
        const double mx = marker_position(phase, speed, src, width);
        for (int y = lay.au_rows; y < height; ++y)
          for (int x = 0; x < width; ++x)
            plane[y * width + x] +=
                cfg.motion_amplitude * std::max(0.0, 1.0 - std::abs(x - mx) / 1.5);
      }

      auto& rec = seq.frames[t];
      rec.frame_index = t;
      rec.image.resize(frame_size);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          for (int c = 0; c < chans; ++c) {
            double v = plane[y * width + x] * chan_gain[c];
            if (cfg.noise_std > 0.0) v += cfg.noise_std * noise(rng);
            rec.image[(static_cast<std::size_t>(y) * width + x) * chans + c] =
                static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
        }
      }
      AULabelVector y(cfg.num_aus);
      for (int u = 0; u < cfg.num_aus; ++u) y[u] = act[u][t];
      rec.label = std::move(y);
    }
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

LabeledCorpus sample_sparse_labels(const LabeledCorpus& corpus, double label_ratio,
                                   SampleMode mode) {
  if (!(label_ratio > 0.0 && label_ratio <= 1.0))
    throw ConfigError("label_ratio must be in (0, 1]");
  LabeledCorpus out = corpus;
  out.label_ratio = label_ratio;
  out.mode = mode;
  const int stride = std::max(1, static_cast<int>(std::lround(1.0 / label_ratio)));
  for (auto& seq : out.sequences) {
    const int frames = seq.num_frames();
    const int budget = (frames + stride - 1) / stride;
    for (int t = 0; t < frames; ++t) {
      const bool keep = mode == SampleMode::kStrided ? t % stride == 0 : t < budget;
      seq.visible[t] = keep && seq.frames[t].label.has_value() ? 1 : 0;
    }
  }
  return out;
}

std::vector<int> clip_window(int t, int key_pos, int clip_len, int num_frames) {
  if (clip_len > num_frames)
    throw DataError("clip length " + std::to_string(clip_len) + " exceeds sequence length " +
                    std::to_string(num_frames));
  if (key_pos < 0 || key_pos >= clip_len) throw DataError("key_pos outside [0, clip_len)");
  if (t < 0 || t >= num_frames) throw DataError("frame index outside the sequence");
  std::vector<int> idx(clip_len);
  for (int i = 0; i < clip_len; ++i) {
    int j = t - key_pos + i;
    while (j < 0 || j >= num_frames) {
      if (j < 0) j = -j;
      if (j >= num_frames) j = 2 * (num_frames - 1) - j;
    }
    idx[i] = j;
  }
  return idx;
}

ClipSample make_clip(const Sequence& seq, int t, int clip_len, int key_pos) {
  const auto idx = clip_window(t, key_pos, clip_len, seq.num_frames());
  ClipSample clip;
  clip.key_pos = key_pos;
  clip.clip_id = (static_cast<std::int64_t>(seq.id) << 32) | static_cast<std::int64_t>(t);
  clip.frames.reserve(clip_len);
  clip.audit_labels.reserve(clip_len);
  for (int i = 0; i < clip_len; ++i) {
    FrameRecord f = seq.frames[idx[i]];
    clip.audit_labels.push_back(f.label.value_or(AULabelVector{}));
    if (i != key_pos) f.label.reset();
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

std::vector<ClipSample> make_clips(const LabeledCorpus& corpus, int clip_len, int key_pos) {
  std::vector<ClipSample> clips;
  for (const auto& seq : corpus.sequences)
    for (int t = 0; t < seq.num_frames(); ++t)
      if (seq.visible[t]) clips.push_back(make_clip(seq, t, clip_len, key_pos));
  return clips;
}

std::size_t count_unique_labels(const std::vector<AULabelVector>& labels) {
  return std::set<AULabelVector>(labels.begin(), labels.end()).size();
}

std::vector<CoverageRow> coverage_statistics(const LabeledCorpus& corpus,
                                             const std::vector<double>& ratios,
                                             const std::vector<SampleMode>& modes) {
  std::vector<CoverageRow> rows;
  for (double r : ratios) {
    for (SampleMode m : modes) {
      const auto sampled = sample_sparse_labels(corpus, r, m);
      const auto labels = sampled.visible_labels();
      rows.push_back({r, m, count_unique_labels(labels), labels.size()});
    }
  }
  return rows;
}

std::string coverage_csv(const std::vector<CoverageRow>& rows) {
  std::string out = "ratio,mode,unique_count,label_count\n";
  for (const auto& r : rows)
    out += format_double(r.ratio) + "," + to_string(r.mode) + "," +
           std::to_string(r.unique_count) + "," + std::to_string(r.label_count) + "\n";
  return out;
}

}  // namespace ksp
