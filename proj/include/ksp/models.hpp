// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "ksp/core.hpp"

namespace ksp {

/// Input normalization then strided 3x3 conv blocks with ReLU.
/// Images [N, C, H, W] -> feature map [N, F, h, w].
class ConvBackboneImpl : public torch::nn::Module {
 public:
  ConvBackboneImpl(const ModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& images);
  [[nodiscard]] int out_channels() const { return out_channels_; }
  /// Spatial size of the output map for the configured image size.
  [[nodiscard]] std::pair<int, int> out_size() const { return out_size_; }

 private:
  std::vector<torch::nn::Conv2d> convs_;
  int in_channels_;
  int out_channels_;
  std::pair<int, int> out_size_;
  double input_mean_;
  double input_scale_;
};
TORCH_MODULE(ConvBackbone);

/// Pre-norm encoder layer over [b, L, W] tokens. With TokenMixer::kMlp the
/// attention sub-block is replaced by a per-token MLP (no token mixing).
class EncoderLayerImpl : public torch::nn::Module {
 public:
  EncoderLayerImpl(int width, int heads, int head_dim, TokenMixer mixer);
  /// Returns the layer output; `attention` receives softmax weights [b, C, L, L]
  /// (undefined for the MLP mixer).
  torch::Tensor forward(const torch::Tensor& x, torch::Tensor* attention);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Linear qkv{nullptr}, proj{nullptr};
  torch::nn::Linear token_fc{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};

 private:
  int heads_;
  int head_dim_;
  TokenMixer mixer_;
};
TORCH_MODULE(EncoderLayer);

class TokenEncoderImpl : public torch::nn::Module {
 public:
  TokenEncoderImpl(int width, int heads, int head_dim, int layers, TokenMixer mixer);
  /// Attention of the last layer goes to `attention` when non-null.
  torch::Tensor forward(const torch::Tensor& tokens, torch::Tensor* attention = nullptr);
  [[nodiscard]] const std::vector<EncoderLayer>& layers() const { return layers_; }

 private:
  std::vector<EncoderLayer> layers_;
};
TORCH_MODULE(TokenEncoder);

struct SpatialOutput {
  torch::Tensor logits;     // [b, U]
  torch::Tensor attention;  // [b, C, U, U]
};

/// AU-wise transformer: U decoupled tokens + positional embeddings, one
/// shared linear readout per token. No classification token.
class SpatialTeacherImpl : public torch::nn::Module {
 public:
  /// `map_size` is the backbone output (h, w).
  SpatialTeacherImpl(const ModelConfig& cfg, int in_channels, std::pair<int, int> map_size);
  /// Feature map [b, F, h, w] -> D_s [b, U, W]. kGlobalAverage: U parallel
  /// 1x1 projections + GAP. kFlatten: one linear projection of the flattened
  /// map per AU.
  torch::Tensor decouple(const torch::Tensor& feature_map);
  SpatialOutput forward_tokens(const torch::Tensor& decoupled);
  SpatialOutput forward(const torch::Tensor& feature_map);

  torch::nn::Conv2d decouple_proj{nullptr};  // kGlobalAverage
  torch::nn::Linear decouple_fc{nullptr};     // kFlatten
  torch::Tensor position;  // [U, W]
  TokenEncoder encoder{nullptr};
  torch::nn::Linear readout{nullptr};

 private:
  int num_aus_;
  int width_;
  FeaturePool pool_;
};
TORCH_MODULE(SpatialTeacher);

struct StudentOutput {
  torch::Tensor feature;  // [b, W], penultimate activations
  torch::Tensor logits;   // [b, U]
};

/// Per-position MLP head; dropout only when `training` is true.
class SpatialStudentImpl : public torch::nn::Module {
 public:
  SpatialStudentImpl(int in_features, int width, int num_aus, double dropout);
  StudentOutput forward(const torch::Tensor& frame_feature, bool training);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};

 private:
  double dropout_;
};
TORCH_MODULE(SpatialStudent);

struct TemporalOutput {
  torch::Tensor au_logits;  // [b, U]
  torch::Tensor ssl_logit;  // [b]
  torch::Tensor attention;  // [b, C, n, n]
};

/// Frame-wise transformer over n tokens with an AU head and a binary
/// temporal-perturbation head.
class TemporalTeacherImpl : public torch::nn::Module {
 public:
  explicit TemporalTeacherImpl(const ModelConfig& cfg);
  TemporalOutput forward(const torch::Tensor& tokens, int key_pos);

  torch::Tensor position;  // [n, W]
  TokenEncoder encoder{nullptr};
  torch::nn::Linear au_head{nullptr};
  torch::nn::Linear tpl_fc1{nullptr}, tpl_fc2{nullptr};

 private:
  int clip_len_;
  int width_;
  TemporalPool pool_;
};
TORCH_MODULE(TemporalTeacher);

struct BranchOutputs {
  torch::Tensor o_a;             // [b, U] spatial teacher
  torch::Tensor o_k;             // [b, U] selected student on the key frame
  torch::Tensor o_ps;            // [b, n-1, U] students on unlabeled positions
  torch::Tensor o_b;             // [b, U] temporal teacher AU head
  torch::Tensor o_ssl;           // [b] perturbation logit, ordered tokens
  torch::Tensor o_ssl_shuffled;  // [b] perturbation logit, shuffled tokens (if requested)
  torch::Tensor o_output;        // [b, U] mean of o_a and o_b
  torch::Tensor tokens;          // [b, n, W]
  torch::Tensor attention_spatial;
  torch::Tensor attention_temporal;
  std::vector<int> pseudo_positions;  // clip positions behind o_ps rows
};

class KnowledgeSpreaderImpl : public torch::nn::Module {
 public:
  explicit KnowledgeSpreaderImpl(const ModelConfig& cfg);

  /// Key images [b, C, H, W] -> spatial teacher output.
  SpatialOutput spatial_branch(const torch::Tensor& key_images);
  /// Clip [b, n, C, H, W] -> per-frame features [b, n, F] (GAP) or [b, n, F * h * w] (flatten).
  torch::Tensor frame_features(const torch::Tensor& clip);

  /// Full two-branch pass. When `shuffles` is non-empty it holds one
  /// permutation per clip: the assembled tokens are reordered along the
  /// timeline and also scored.
  BranchOutputs forward(const torch::Tensor& key_images, const torch::Tensor& clip, int key_pos,
                        bool training, const std::vector<std::vector<int>>& shuffles = {});

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] std::int64_t parameter_count() const;
  /// Parameter-group prefix ("backbone_a", "students.3", ...) of every named parameter.
  [[nodiscard]] std::vector<std::string> parameter_groups() const;

  ConvBackbone backbone_a{nullptr}, backbone_b{nullptr};
  SpatialTeacher spatial_teacher{nullptr};
  std::vector<SpatialStudent> students;
  TemporalTeacher temporal_teacher{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(KnowledgeSpreader);

/// Images stored row-major H x W x C -> tensor [N, C, H, W].
torch::Tensor images_to_tensor(const std::vector<const std::vector<float>*>& images, int height,
                               int width, int channels);

/// Applies a per-clip token permutation: out[i, j] = tokens[i, perm[i][j]].
torch::Tensor permute_tokens(const torch::Tensor& tokens, const std::vector<std::vector<int>>& perms);

// Checkpoint: torch archive holding every parameter under its module path,
// plus "ksp.format_version", "ksp.config" (config text), "ksp.epoch",
// "ksp.batch_counter", "ksp.rng_seed" and "ksp.pos_weights".
inline constexpr std::int64_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, KnowledgeSpreader& model,
                     const ExperimentConfig& cfg, const RunState& state);

struct LoadedCheckpoint {
  KnowledgeSpreader model{nullptr};
  ExperimentConfig config;
  RunState state;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ksp
