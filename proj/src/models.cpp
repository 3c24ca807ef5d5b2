// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#include "ksp/models.hpp"

#include <cmath>
#include <set>

namespace ksp {

ConvBackboneImpl::ConvBackboneImpl(const ModelConfig& cfg)
    : in_channels_(cfg.image_channels),
      out_channels_(cfg.image_channels),
      input_mean_(cfg.input_mean),
      input_scale_(cfg.input_scale) {
  const auto& widths = cfg.backbone_widths;
  const auto& strides = cfg.backbone_strides;
  TORCH_CHECK(widths.size() == strides.size(), "backbone widths/strides length mismatch");
  int prev = in_channels_, h = cfg.image_height, w = cfg.image_width;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    auto conv = torch::nn::Conv2d(
        torch::nn::Conv2dOptions(prev, widths[i], 3).stride(strides[i]).padding(1));
    convs_.push_back(register_module("conv" + std::to_string(i), conv));
    prev = widths[i];
    h = (h - 1) / strides[i] + 1;
    w = (w - 1) / strides[i] + 1;
  }
  out_channels_ = prev;
  out_size_ = {h, w};
}

torch::Tensor ConvBackboneImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != in_channels_)
    throw DataError("backbone: expected [N, " + std::to_string(in_channels_) + ", H, W] input");
  auto x = (images - input_mean_) * input_scale_;
  for (auto& conv : convs_) x = torch::relu(conv->forward(x));
  return x;
}

EncoderLayerImpl::EncoderLayerImpl(int width, int heads, int head_dim, TokenMixer mixer)
    : heads_(heads), head_dim_(head_dim), mixer_(mixer) {
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
  if (mixer == TokenMixer::kTransformer) {
    qkv = register_module("qkv", torch::nn::Linear(width, 3 * heads * head_dim));
    proj = register_module("proj", torch::nn::Linear(heads * head_dim, width));
  } else {
    token_fc = register_module("token_fc", torch::nn::Linear(width, width));
  }
  fc1 = register_module("fc1", torch::nn::Linear(width, 2 * width));
  fc2 = register_module("fc2", torch::nn::Linear(2 * width, width));
}

torch::Tensor EncoderLayerImpl::forward(const torch::Tensor& x, torch::Tensor* attention) {
  const auto b = x.size(0), len = x.size(1);
  torch::Tensor y;
  if (mixer_ == TokenMixer::kTransformer) {
    auto h = qkv->forward(norm1->forward(x))
                 .view({b, len, 3, heads_, head_dim_})
                 .permute({2, 0, 3, 1, 4});  // [3, b, C, L, H]
    auto q = h[0], k = h[1], v = h[2];
    auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) /
                                   std::sqrt(static_cast<double>(head_dim_)),
                               -1);
    if (attention != nullptr) *attention = attn;
    auto mixed = torch::matmul(attn, v).permute({0, 2, 1, 3}).reshape({b, len, heads_ * head_dim_});
    y = x + proj->forward(mixed);
  } else {
    if (attention != nullptr) *attention = torch::Tensor();
    y = x + token_fc->forward(torch::gelu(norm1->forward(x)));
  }
  return y + fc2->forward(torch::gelu(fc1->forward(norm2->forward(y))));
}

TokenEncoderImpl::TokenEncoderImpl(int width, int heads, int head_dim, int layers,
                                   TokenMixer mixer) {
  for (int i = 0; i < layers; ++i)
    layers_.push_back(register_module("layer" + std::to_string(i),
                                      EncoderLayer(width, heads, head_dim, mixer)));
}

torch::Tensor TokenEncoderImpl::forward(const torch::Tensor& tokens, torch::Tensor* attention) {
  auto x = tokens;
  for (auto& layer : layers_) x = layer->forward(x, attention);
  return x;
}

SpatialTeacherImpl::SpatialTeacherImpl(const ModelConfig& cfg, int in_channels,
                                       std::pair<int, int> map_size)
    : num_aus_(cfg.num_aus), width_(cfg.feature_width), pool_(cfg.feature_pool) {
  const int out = cfg.num_aus * cfg.feature_width;
  if (pool_ == FeaturePool::kGlobalAverage) {
    decouple_proj = register_module(
        "decouple_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out, 1)));
  } else {
    decouple_fc = register_module(
        "decouple_fc",
        torch::nn::Linear(in_channels * map_size.first * map_size.second, out));
  }
  position = register_parameter("position",
                                torch::randn({cfg.num_aus, cfg.feature_width}) * 0.02);
  encoder = register_module("encoder", TokenEncoder(cfg.feature_width, cfg.channels, cfg.head_dim,
                                                    cfg.encoder_layers, cfg.mixer));
  readout = register_module("readout", torch::nn::Linear(cfg.feature_width, 1));
}

torch::Tensor SpatialTeacherImpl::decouple(const torch::Tensor& feature_map) {
  const auto b = feature_map.size(0);
  if (pool_ == FeaturePool::kGlobalAverage)
    return decouple_proj->forward(feature_map).mean({2, 3}).view({b, num_aus_, width_});
  return decouple_fc->forward(feature_map.flatten(1)).view({b, num_aus_, width_});
}

SpatialOutput SpatialTeacherImpl::forward_tokens(const torch::Tensor& decoupled) {
  if (decoupled.dim() != 3 || decoupled.size(1) != num_aus_ || decoupled.size(2) != width_)
    throw DataError("spatial teacher: expected [b, U, W] decoupled features");
  SpatialOutput out;
  auto x = encoder->forward(decoupled + position, &out.attention);
  out.logits = readout->forward(x).squeeze(-1);
  return out;
}

SpatialOutput SpatialTeacherImpl::forward(const torch::Tensor& feature_map) {
  return forward_tokens(decouple(feature_map));
}

SpatialStudentImpl::SpatialStudentImpl(int in_features, int width, int num_aus, double dropout)
    : dropout_(dropout) {
  fc1 = register_module("fc1", torch::nn::Linear(in_features, width));
  fc2 = register_module("fc2", torch::nn::Linear(width, num_aus));
}

StudentOutput SpatialStudentImpl::forward(const torch::Tensor& frame_feature, bool training) {
  StudentOutput out;
  out.feature = torch::dropout(torch::relu(fc1->forward(frame_feature)), dropout_, training);
  out.logits = fc2->forward(out.feature);
  return out;
}

TemporalTeacherImpl::TemporalTeacherImpl(const ModelConfig& cfg)
    : clip_len_(cfg.clip_len), width_(cfg.feature_width), pool_(cfg.temporal_pool) {
  position = register_parameter("position",
                                torch::randn({cfg.clip_len, cfg.feature_width}) * 0.02);
  encoder = register_module("encoder", TokenEncoder(cfg.feature_width, cfg.channels, cfg.head_dim,
                                                    cfg.encoder_layers, cfg.mixer));
  au_head = register_module("au_head", torch::nn::Linear(cfg.feature_width, cfg.num_aus));
  tpl_fc1 = register_module("tpl_fc1",
                            torch::nn::Linear((2 * cfg.clip_len - 1) * cfg.feature_width, cfg.feature_width));
  tpl_fc2 = register_module("tpl_fc2", torch::nn::Linear(cfg.feature_width, 1));
}

TemporalOutput TemporalTeacherImpl::forward(const torch::Tensor& tokens, int key_pos) {
  if (tokens.dim() != 3 || tokens.size(1) != clip_len_ || tokens.size(2) != width_)
    throw DataError("temporal teacher: expected [b, " + std::to_string(clip_len_) + ", " +
                    std::to_string(width_) + "] tokens");
  TemporalOutput out;
  auto x = encoder->forward(tokens + position, &out.attention);
  auto pooled = pool_ == TemporalPool::kMean ? x.mean(1) : x.select(1, key_pos);
  out.au_logits = au_head->forward(pooled);
  // Adjacent-token jumps make broken temporal smoothness a first-order cue.
  auto jumps = (x.slice(1, 1) - x.slice(1, 0, -1)).abs();
  auto z = torch::cat({x.flatten(1), jumps.flatten(1)}, 1);
  out.ssl_logit = tpl_fc2->forward(torch::relu(tpl_fc1->forward(z))).squeeze(-1);
  return out;
}

KnowledgeSpreaderImpl::KnowledgeSpreaderImpl(const ModelConfig& cfg) : cfg_(cfg) {
  validate(cfg);
  backbone_a = register_module("backbone_a", ConvBackbone(cfg));
  backbone_b = register_module("backbone_b", ConvBackbone(cfg));
  const int channels = backbone_a->out_channels();
  const auto [h, w] = backbone_a->out_size();
  const int feat = cfg.feature_pool == FeaturePool::kGlobalAverage ? channels : channels * h * w;
  spatial_teacher = register_module("spatial_teacher",
                                    SpatialTeacher(cfg, channels, backbone_a->out_size()));
  torch::nn::ModuleList list;
  for (int j = 0; j < cfg.clip_len; ++j) {
    students.emplace_back(feat, cfg.feature_width, cfg.num_aus, cfg.student_dropout);
    list->push_back(students.back());
  }
  register_module("students", list);
  temporal_teacher = register_module("temporal_teacher", TemporalTeacher(cfg));
}

SpatialOutput KnowledgeSpreaderImpl::spatial_branch(const torch::Tensor& key_images) {
  return spatial_teacher->forward(backbone_a->forward(key_images));
}

torch::Tensor KnowledgeSpreaderImpl::frame_features(const torch::Tensor& clip) {
  if (clip.dim() != 5 || clip.size(1) != cfg_.clip_len)
    throw DataError("frame_features: expected [b, n, C, H, W] clip");
  const auto b = clip.size(0), n = clip.size(1);
  auto flat = clip.reshape({b * n, clip.size(2), clip.size(3), clip.size(4)});
  auto map = backbone_b->forward(flat);
  auto f = cfg_.feature_pool == FeaturePool::kGlobalAverage ? map.mean({2, 3}) : map.flatten(1);
  return f.view({b, n, f.size(1)});
}

BranchOutputs KnowledgeSpreaderImpl::forward(const torch::Tensor& key_images,
                                             const torch::Tensor& clip, int key_pos, bool training,
                                             const std::vector<std::vector<int>>& shuffles) {
  const int n = cfg_.clip_len;
  if (key_pos < 0 || key_pos >= n) throw DataError("forward: key_pos outside [0, n)");
  BranchOutputs out;
  auto sa = spatial_branch(key_images);
  out.o_a = sa.logits;
  out.attention_spatial = sa.attention;

  auto feats = frame_features(clip);
  std::vector<torch::Tensor> tokens, ps;
  for (int q = 0; q < n; ++q) {
    auto so = students[q]->forward(feats.select(1, q), training);
    tokens.push_back(so.feature);
    if (q == key_pos) {
      out.o_k = so.logits;
    } else {
      ps.push_back(so.logits);
      out.pseudo_positions.push_back(q);
    }
  }
  out.tokens = torch::stack(tokens, 1);
  out.o_ps = torch::stack(ps, 1);

  const auto b = out.tokens.size(0);
  if (shuffles.empty()) {
    auto tb = temporal_teacher->forward(out.tokens, key_pos);
    out.o_b = tb.au_logits;
    out.o_ssl = tb.ssl_logit;
    out.attention_temporal = tb.attention;
  } else {
    auto both = torch::cat({out.tokens, permute_tokens(out.tokens, shuffles)}, 0);
    auto tb = temporal_teacher->forward(both, key_pos);
    out.o_b = tb.au_logits.slice(0, 0, b);
    out.o_ssl = tb.ssl_logit.slice(0, 0, b);
    out.o_ssl_shuffled = tb.ssl_logit.slice(0, b, 2 * b);
    if (tb.attention.defined()) out.attention_temporal = tb.attention.slice(0, 0, b);
  }
  out.o_output = (out.o_a + out.o_b) / 2;
  return out;
}

std::int64_t KnowledgeSpreaderImpl::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : parameters()) total += p.numel();
  return total;
}

std::vector<std::string> KnowledgeSpreaderImpl::parameter_groups() const {
  std::set<std::string> groups;
  for (const auto& item : named_parameters()) {
    const auto& key = item.key();
    auto dot = key.find('.');
    std::string group = key.substr(0, dot);
    if (group == "students") group = key.substr(0, key.find('.', dot + 1));
    groups.insert(group);
  }
  return {groups.begin(), groups.end()};
}

torch::Tensor images_to_tensor(const std::vector<const std::vector<float>*>& images, int height,
                               int width, int channels) {
  const auto frame = static_cast<std::size_t>(height) * width * channels;
  std::vector<float> buf;
  buf.reserve(images.size() * frame);
  for (const auto* img : images) {
    if (img->size() != frame) throw DataError("image size does not match the configured shape");
    buf.insert(buf.end(), img->begin(), img->end());
  }
  return torch::from_blob(buf.data(),
                          {static_cast<std::int64_t>(images.size()), height, width, channels},
                          torch::kFloat32)
      .permute({0, 3, 1, 2})
      .clone(torch::MemoryFormat::Contiguous);
}

torch::Tensor permute_tokens(const torch::Tensor& tokens,
                             const std::vector<std::vector<int>>& perms) {
  const auto b = tokens.size(0), n = tokens.size(1), w = tokens.size(2);
  TORCH_CHECK(static_cast<std::int64_t>(perms.size()) == b, "one permutation per clip required");
  std::vector<std::int64_t> idx;
  idx.reserve(b * n);
  for (const auto& p : perms) {
    TORCH_CHECK(static_cast<std::int64_t>(p.size()) == n, "permutation length mismatch");
    idx.insert(idx.end(), p.begin(), p.end());
  }
  auto index = torch::tensor(idx, torch::kLong).view({b, n, 1}).expand({b, n, w});
  return tokens.gather(1, index);
}

void save_checkpoint(const std::string& path, KnowledgeSpreader& model,
                     const ExperimentConfig& cfg, const RunState& state) {
  torch::serialize::OutputArchive archive;
  model->save(archive);
  archive.write("ksp.format_version", torch::tensor(kCheckpointVersion));
  archive.write("ksp.config", c10::IValue(to_config_text(cfg)));
  archive.write("ksp.epoch", torch::tensor(static_cast<std::int64_t>(state.epoch)));
  archive.write("ksp.batch_counter", torch::tensor(state.batch_counter));
  archive.write("ksp.rng_seed",
                c10::IValue(std::to_string(state.rng_seed)));
  archive.write("ksp.pos_weights",
                torch::tensor(state.pos_weights.empty() ? std::vector<double>{0.0} : state.pos_weights,
                              torch::kFloat64));
  archive.save_to(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path);
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint '" + path + "'");
  }
  torch::Tensor version;
  if (!archive.try_read("ksp.format_version", version) ||
      version.item<std::int64_t>() != kCheckpointVersion)
    throw DataError("checkpoint '" + path + "': unsupported format version");
  c10::IValue text;
  archive.read("ksp.config", text);

  LoadedCheckpoint out;
  out.config = parse_config_text(text.toStringRef());
  out.model = KnowledgeSpreader(out.config.model);
  out.model->load(archive);

  torch::Tensor epoch, counter, weights;
  c10::IValue seed;
  archive.read("ksp.epoch", epoch);
  archive.read("ksp.batch_counter", counter);
  archive.read("ksp.rng_seed", seed);
  archive.read("ksp.pos_weights", weights);
  out.state.epoch = static_cast<int>(epoch.item<std::int64_t>());
  out.state.batch_counter = counter.item<std::int64_t>();
  out.state.rng_seed = std::stoull(seed.toStringRef());
  auto w = weights.contiguous();
  out.state.pos_weights.assign(w.data_ptr<double>(), w.data_ptr<double>() + w.numel());
  return out;
}

}  // namespace ksp
