// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ksp/core.hpp"

namespace ksp {

/// Forces `follower` to copy `leader`'s state on each leader run with the
/// given probability.
struct Coupling {
  int leader = 0;
  int follower = 1;
  double probability = 1.0;

  friend bool operator==(const Coupling&, const Coupling&) = default;
};

struct SynthConfig {
  int num_sequences = 40;
  int frames_per_sequence = 120;
  int num_aus = 5;
  int image_height = 16;
  int image_width = 16;
  int image_channels = 1;
  std::vector<Coupling> couplings = {{0, 1, 0.8}, {2, 3, 0.5}};
  /// Minimum event duration in frames; interior on/off runs never go shorter.
  int min_event_frames = 6;
  /// Mean on-run length in frames.
  double mean_event_frames = 14.0;
  /// Stationary fraction of frames in which an uncoupled AU is active.
  double active_prob = 0.35;
  double au_amplitude = 0.35;
  double noise_std = 0.3;
  /// Head-motion proxy: marker speed in pixels per frame (0 disables).
  double motion_speed = 0.6;
  /// Peak brightness of the marker.
  double motion_amplitude = 0.6;
  /// Probability that a frame's pixels come from a displaced time index
  /// while its ground truth stays on the nominal timeline.
  double desync_prob = 0.06;
  std::uint64_t seed = 0;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct Sequence {
  int id = 0;
  /// Every frame carries its full ground truth in `label`.
  std::vector<FrameRecord> frames;
  /// Trainer-visible labels.
  std::vector<std::uint8_t> visible;

  [[nodiscard]] int num_frames() const { return static_cast<int>(frames.size()); }
};

struct LabeledCorpus {
  int num_aus = 0;
  int image_height = 0;
  int image_width = 0;
  int image_channels = 0;
  std::vector<Sequence> sequences;
  double label_ratio = 1.0;
  SampleMode mode = SampleMode::kStrided;

  [[nodiscard]] std::size_t frame_size() const {
    return static_cast<std::size_t>(image_height) * image_width * image_channels;
  }
  [[nodiscard]] std::size_t num_visible() const;
  /// Ground truth of every visible frame.
  [[nodiscard]] std::vector<AULabelVector> visible_labels() const;
  /// Sub-corpus holding the sequences at `indices`, in that order.
  [[nodiscard]] LabeledCorpus subset(const std::vector<int>& indices) const;
};

void validate(const SynthConfig& cfg);

/// Procedurally renders `cfg.num_sequences` sequences. All labels start visible.
LabeledCorpus generate_corpus(const SynthConfig& cfg);

/// Latent on/off signal per AU for one sequence, shape [U][T]. Exposed for tests.
std::vector<std::vector<std::uint8_t>> generate_activations(const SynthConfig& cfg,
                                                            std::uint64_t seq_seed);

/// Keeps every k-th label (k = round(1 / ratio)) in strided mode, or a leading
/// block of the same size in contiguous mode.
LabeledCorpus sample_sparse_labels(const LabeledCorpus& corpus, double label_ratio,
                                   SampleMode mode);

/// Frame indices of the window around `t` with `t` at `key_pos`, reflected at
/// the sequence edges.
std::vector<int> clip_window(int t, int key_pos, int clip_len, int num_frames);

/// Window around frame `t` of `seq`; only the key frame keeps its label.
ClipSample make_clip(const Sequence& seq, int t, int clip_len, int key_pos);

/// One clip per visible label, the labeled frame placed at `key_pos`.
std::vector<ClipSample> make_clips(const LabeledCorpus& corpus, int clip_len, int key_pos);

std::size_t count_unique_labels(const std::vector<AULabelVector>& labels);

struct CoverageRow {
  double ratio = 0.0;
  SampleMode mode = SampleMode::kStrided;
  std::size_t unique_count = 0;
  std::size_t label_count = 0;
};

std::vector<CoverageRow> coverage_statistics(const LabeledCorpus& corpus,
                                             const std::vector<double>& ratios,
                                             const std::vector<SampleMode>& modes);
std::string coverage_csv(const std::vector<CoverageRow>& rows);

// On-disk corpus: corpus.cfg, labels.csv and one seq_NNNN.bin per sequence.
void save_corpus(const LabeledCorpus& corpus, const SynthConfig& cfg, const std::string& dir);
LabeledCorpus load_corpus(const std::string& dir);
SynthConfig load_synth_config(const std::string& dir);
/// FNV-1a over every corpus file, in a fixed order.
std::string corpus_hash(const std::string& dir);

std::string to_synth_config_text(const SynthConfig& cfg);
SynthConfig parse_synth_config_text(const std::string& text);

}  // namespace ksp
