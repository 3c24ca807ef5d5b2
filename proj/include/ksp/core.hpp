// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ksp {

/// Raised for invalid configuration values and malformed config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for data-shape and corpus problems (bad windows, impossible
/// generation constraints, unreadable corpus files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary occurrence flags over U action units.
struct AULabelVector {
  std::vector<std::uint8_t> values;

  AULabelVector() = default;
  explicit AULabelVector(std::size_t num_aus) : values(num_aus, 0) {}
  explicit AULabelVector(std::vector<std::uint8_t> v) : values(std::move(v)) {}

  [[nodiscard]] std::size_t size() const { return values.size(); }
  std::uint8_t operator[](std::size_t i) const { return values[i]; }
  std::uint8_t& operator[](std::size_t i) { return values[i]; }

  friend bool operator==(const AULabelVector&, const AULabelVector&) = default;
  friend auto operator<=>(const AULabelVector&, const AULabelVector&) = default;
};

struct FrameRecord {
  /// Row-major H x W x C, values in [0, 1].
  std::vector<float> image;
  std::optional<AULabelVector> label;
  std::int64_t frame_index = 0;
};

struct ClipSample {
  std::vector<FrameRecord> frames;
  int key_pos = 0;
  std::int64_t clip_id = 0;
  /// Ground truth of every window frame. Audit only; never fed to a loss.
  std::vector<AULabelVector> audit_labels;
};

enum class KLDirection { kTargetToModel, kModelToTarget };
enum class TemporalPool { kMean, kKeyToken };
enum class TokenMixer { kTransformer, kMlp };
/// How a backbone feature map becomes per-AU and per-frame vectors.
enum class FeaturePool { kFlatten, kGlobalAverage };
enum class SampleMode { kStrided, kContiguous };

struct HyperParams {
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double lambda3 = 0.2;
  double lambda4 = 0.25;
  double alpha = 0.5;
  double temperature = 1.0;
  double ramp_omega = 2.0;
  double ramp_mu = 0.0;
  double ramp_sigma = 5.0;
  int warmup_epochs = 5;
  int clip_len = 5;
  int z = 2;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 50;
  int batch_size = 8;
  int tpl_start_epoch = 3;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

struct ModelConfig {
  int num_aus = 5;
  int clip_len = 5;
  int feature_width = 32;
  int channels = 4;
  int head_dim = 8;
  int encoder_layers = 2;
  int image_height = 16;
  int image_width = 16;
  int image_channels = 1;
  /// Images are mapped to (x - input_mean) * input_scale before the backbone.
  double input_mean = 0.5;
  double input_scale = 4.0;
  std::vector<int> backbone_widths = {16, 32};
  std::vector<int> backbone_strides = {2, 2};
  FeaturePool feature_pool = FeaturePool::kFlatten;
  double student_dropout = 0.2;
  TokenMixer mixer = TokenMixer::kTransformer;
  TemporalPool temporal_pool = TemporalPool::kMean;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Training switches outside the loss hyperparameters.
struct TrainOptions {
  KLDirection kl_direction = KLDirection::kTargetToModel;
  bool tpl_gating = true;
  bool augment = true;
  double augment_strength = 0.1;
  /// Train on clips without any visible label once the model is stable.
  bool unlabeled_clips = false;
  int unlabeled_start_epoch = 10;
  double label_ratio = 0.1;
  SampleMode sample_mode = SampleMode::kStrided;
  double val_fraction = 0.2;
  int eval_stride = 1;
  bool save_checkpoints = true;
  /// Global gradient-norm clip per step; 0 disables.
  double grad_clip_norm = 0.0;

  friend bool operator==(const TrainOptions&, const TrainOptions&) = default;
};

struct ExperimentConfig {
  HyperParams hp;
  ModelConfig model;
  TrainOptions options;
  std::uint64_t seed = 0;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct RunState {
  int epoch = 0;
  std::int64_t batch_counter = 0;
  std::uint64_t rng_seed = 0;
  std::vector<double> pos_weights;
};

/// w_u = clamp(neg_u / max(pos_u, 1), 0.1, 10) over the labeled subset.
std::vector<double> positive_class_weights(const std::vector<AULabelVector>& labels);

/// B mod n.
int key_frame_position(std::int64_t batch_counter, int clip_len);

void validate(const HyperParams& hp);
void validate(const ModelConfig& cfg);
void validate(const ExperimentConfig& cfg);

// Config text: one `key = value` per line, `#` starts a comment.
std::string to_config_text(const ExperimentConfig& cfg);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);
void save_config_file(const ExperimentConfig& cfg, const std::string& path);

/// Applies a single `key`, `value` pair; throws ConfigError on unknown keys.
void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Every config key, in file order.
std::vector<std::string> config_keys();
/// Current value of `key` as written to config files.
std::string config_value(const ExperimentConfig& cfg, const std::string& key);

/// Seed from the KSP_SEED environment variable, if set and valid.
std::optional<std::uint64_t> seed_from_env();

/// Derives an independent stream seed (splitmix64 of seed ^ stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

std::string format_double(double v);
std::string to_string(KLDirection d);
std::string to_string(TemporalPool p);
std::string to_string(TokenMixer m);
std::string to_string(FeaturePool p);
std::string to_string(SampleMode m);
SampleMode parse_sample_mode(const std::string& s);
KLDirection parse_kl_direction(const std::string& s);

}  // namespace ksp
