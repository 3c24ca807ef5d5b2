// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#include "ksp/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string_view>

namespace ksp {

std::vector<double> positive_class_weights(const std::vector<AULabelVector>& labels) {
  if (labels.empty()) throw ConfigError("positive_class_weights: empty label collection");
  const std::size_t num_aus = labels.front().size();
  std::vector<double> pos(num_aus, 0.0), neg(num_aus, 0.0);
  for (const auto& y : labels) {
    if (y.size() != num_aus) throw ConfigError("positive_class_weights: ragged label vectors");
    for (std::size_t u = 0; u < num_aus; ++u) {
      if (y[u] != 0) {
        pos[u] += 1.0;
      } else {
        neg[u] += 1.0;
      }
    }
  }
  std::vector<double> w(num_aus);
  for (std::size_t u = 0; u < num_aus; ++u)
    w[u] = std::clamp(neg[u] / std::max(pos[u], 1.0), 0.1, 10.0);
  return w;
}

int key_frame_position(std::int64_t batch_counter, int clip_len) {
  if (clip_len <= 0) throw ConfigError("key_frame_position: clip length must be positive");
  if (batch_counter < 0) throw ConfigError("key_frame_position: negative batch counter");
  return static_cast<int>(batch_counter % clip_len);
}

void validate(const HyperParams& hp) {
  for (double l : {hp.lambda1, hp.lambda2, hp.lambda3, hp.lambda4, hp.alpha})
    if (!(l >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(hp.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (hp.ramp_sigma == 0.0) throw ConfigError("ramp_sigma must be non-zero");
  if (hp.warmup_epochs < 1) throw ConfigError("warmup_epochs must be >= 1");
  if (hp.clip_len < 2) throw ConfigError("clip_len must be >= 2");
  if (hp.z != 2) throw ConfigError("z is fixed at 2");
  if (!(hp.lr > 0.0)) throw ConfigError("lr must be positive");
  if (hp.momentum < 0.0 || hp.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (hp.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (hp.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (hp.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (hp.tpl_start_epoch < 1) throw ConfigError("tpl_start_epoch must be >= 1");
}

void validate(const ModelConfig& cfg) {
  if (cfg.num_aus < 2) throw ConfigError("num_aus must be >= 2");
  if (cfg.clip_len < 2) throw ConfigError("clip_len must be >= 2");
  if (cfg.head_dim <= 0) throw ConfigError("head_dim must be positive");
  if (cfg.channels <= 0) throw ConfigError("channels must be positive");
  if (cfg.feature_width <= 0) throw ConfigError("feature_width must be positive");
  if (cfg.encoder_layers < 1) throw ConfigError("encoder_layers must be >= 1");
  if (cfg.image_height < 1 || cfg.image_width < 1 || cfg.image_channels < 1)
    throw ConfigError("image dimensions must be positive");
  if (cfg.backbone_widths.empty()) throw ConfigError("backbone needs at least one block");
  if (cfg.backbone_widths.size() != cfg.backbone_strides.size())
    throw ConfigError("backbone_widths and backbone_strides differ in length");
  for (int w : cfg.backbone_widths)
    if (w < 1) throw ConfigError("backbone widths must be positive");
  for (int s : cfg.backbone_strides)
    if (s < 1) throw ConfigError("backbone strides must be positive");
  if (cfg.student_dropout < 0.0 || cfg.student_dropout > 1.0)
    throw ConfigError("student_dropout must be in [0, 1]");
  if (!std::isfinite(cfg.input_mean) || !std::isfinite(cfg.input_scale) || cfg.input_scale <= 0.0)
    throw ConfigError("input_scale must be positive and finite");
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.hp);
  validate(cfg.model);
  if (cfg.hp.clip_len != cfg.model.clip_len)
    throw ConfigError("hp.clip_len and model.clip_len disagree");
  const auto& o = cfg.options;
  if (!(o.label_ratio > 0.0 && o.label_ratio <= 1.0))
    throw ConfigError("label_ratio must be in (0, 1]");
  if (!(o.val_fraction >= 0.0 && o.val_fraction < 1.0))
    throw ConfigError("val_fraction must be in [0, 1)");
  if (o.eval_stride < 1) throw ConfigError("eval_stride must be >= 1");
  if (o.augment_strength < 0.0) throw ConfigError("augment_strength must be non-negative");
  if (!(o.grad_clip_norm >= 0.0)) throw ConfigError("grad_clip_norm must be non-negative");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string to_string(KLDirection d) {
  return d == KLDirection::kTargetToModel ? "target-to-model" : "model-to-target";
}
std::string to_string(FeaturePool p) {
  return p == FeaturePool::kFlatten ? "flatten" : "gap";
}
std::string to_string(TemporalPool p) { return p == TemporalPool::kMean ? "mean" : "key"; }
std::string to_string(TokenMixer m) {
  return m == TokenMixer::kTransformer ? "transformer" : "mlp";
}
std::string to_string(SampleMode m) {
  return m == SampleMode::kStrided ? "strided" : "contiguous";
}

SampleMode parse_sample_mode(const std::string& s) {
  if (s == "strided") return SampleMode::kStrided;
  if (s == "contiguous") return SampleMode::kContiguous;
  throw ConfigError("unknown sample mode '" + s + "'");
}

KLDirection parse_kl_direction(const std::string& s) {
  if (s == "target-to-model") return KLDirection::kTargetToModel;
  if (s == "model-to-target") return KLDirection::kModelToTarget;
  throw ConfigError("unknown kl direction '" + s + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

#define KSP_DOUBLE(path)                                                                  \
  Field {                                                                                 \
    [](const ExperimentConfig& c) { return format_double(c.path); },                     \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {             \
          c.path = parse_double(k, v);                                                    \
        }                                                                                 \
  }
#define KSP_INT(path)                                                                     \
  Field {                                                                                 \
    [](const ExperimentConfig& c) { return std::to_string(c.path); },                    \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {             \
          c.path = parse_int<decltype(c.path)>(k, v);                                     \
        }                                                                                 \
  }
#define KSP_BOOL(path)                                                                    \
  Field {                                                                                 \
    [](const ExperimentConfig& c) { return std::string(c.path ? "true" : "false"); },    \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {             \
          c.path = parse_bool(k, v);                                                      \
        }                                                                                 \
  }

// Key order here is the order written to config files.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", KSP_INT(seed)},
      {"lambda1", KSP_DOUBLE(hp.lambda1)},
      {"lambda2", KSP_DOUBLE(hp.lambda2)},
      {"lambda3", KSP_DOUBLE(hp.lambda3)},
      {"lambda4", KSP_DOUBLE(hp.lambda4)},
      {"alpha", KSP_DOUBLE(hp.alpha)},
      {"temperature", KSP_DOUBLE(hp.temperature)},
      {"ramp_omega", KSP_DOUBLE(hp.ramp_omega)},
      {"ramp_mu", KSP_DOUBLE(hp.ramp_mu)},
      {"ramp_sigma", KSP_DOUBLE(hp.ramp_sigma)},
      {"warmup_epochs", KSP_INT(hp.warmup_epochs)},
      {"clip_len",
       Field{[](const ExperimentConfig& c) { return std::to_string(c.hp.clip_len); },
             [](ExperimentConfig& c, const std::string& k, const std::string& v) {
               c.hp.clip_len = parse_int<int>(k, v);
               c.model.clip_len = c.hp.clip_len;
             }}},
      {"z", KSP_INT(hp.z)},
      {"lr", KSP_DOUBLE(hp.lr)},
      {"momentum", KSP_DOUBLE(hp.momentum)},
      {"weight_decay", KSP_DOUBLE(hp.weight_decay)},
      {"epochs", KSP_INT(hp.epochs)},
      {"batch_size", KSP_INT(hp.batch_size)},
      {"tpl_start_epoch", KSP_INT(hp.tpl_start_epoch)},
      {"num_aus", KSP_INT(model.num_aus)},
      {"feature_width", KSP_INT(model.feature_width)},
      {"channels", KSP_INT(model.channels)},
      {"head_dim", KSP_INT(model.head_dim)},
      {"encoder_layers", KSP_INT(model.encoder_layers)},
      {"image_height", KSP_INT(model.image_height)},
      {"image_width", KSP_INT(model.image_width)},
      {"image_channels", KSP_INT(model.image_channels)},
      {"input_mean", KSP_DOUBLE(model.input_mean)},
      {"input_scale", KSP_DOUBLE(model.input_scale)},
      {"backbone_widths",
       Field{[](const ExperimentConfig& c) { return join(c.model.backbone_widths); },
             [](ExperimentConfig& c, const std::string& k, const std::string& v) {
               c.model.backbone_widths = parse_int_list(k, v);
             }}},
      {"backbone_strides",
       Field{[](const ExperimentConfig& c) { return join(c.model.backbone_strides); },
             [](ExperimentConfig& c, const std::string& k, const std::string& v) {
               c.model.backbone_strides = parse_int_list(k, v);
             }}},
      {"student_dropout", KSP_DOUBLE(model.student_dropout)},
      {"mixer", Field{[](const ExperimentConfig& c) { return to_string(c.model.mixer); },
                      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                        if (v == "transformer") {
                          c.model.mixer = TokenMixer::kTransformer;
                        } else if (v == "mlp") {
                          c.model.mixer = TokenMixer::kMlp;
                        } else {
                          throw ConfigError("config key '" + k + "': unknown mixer '" + v + "'");
                        }
                      }}},
      {"feature_pool",
       Field{[](const ExperimentConfig& c) { return to_string(c.model.feature_pool); },
             [](ExperimentConfig& c, const std::string& k, const std::string& v) {
               if (v == "flatten") {
                 c.model.feature_pool = FeaturePool::kFlatten;
               } else if (v == "gap") {
                 c.model.feature_pool = FeaturePool::kGlobalAverage;
               } else {
                 throw ConfigError("config key '" + k + "': unknown feature pool '" + v + "'");
               }
             }}},
      {"temporal_pool",
       Field{[](const ExperimentConfig& c) { return to_string(c.model.temporal_pool); },
             [](ExperimentConfig& c, const std::string& k, const std::string& v) {
               if (v == "mean") {
                 c.model.temporal_pool = TemporalPool::kMean;
               } else if (v == "key") {
                 c.model.temporal_pool = TemporalPool::kKeyToken;
               } else {
                 throw ConfigError("config key '" + k + "': unknown pool '" + v + "'");
               }
             }}},
      {"kl_direction",
       Field{[](const ExperimentConfig& c) { return to_string(c.options.kl_direction); },
             [](ExperimentConfig& c, const std::string&, const std::string& v) {
               c.options.kl_direction = parse_kl_direction(v);
             }}},
      {"tpl_gating", KSP_BOOL(options.tpl_gating)},
      {"augment", KSP_BOOL(options.augment)},
      {"augment_strength", KSP_DOUBLE(options.augment_strength)},
      {"unlabeled_clips", KSP_BOOL(options.unlabeled_clips)},
      {"unlabeled_start_epoch", KSP_INT(options.unlabeled_start_epoch)},
      {"label_ratio", KSP_DOUBLE(options.label_ratio)},
      {"sample_mode",
       Field{[](const ExperimentConfig& c) { return to_string(c.options.sample_mode); },
             [](ExperimentConfig& c, const std::string&, const std::string& v) {
               c.options.sample_mode = parse_sample_mode(v);
             }}},
      {"val_fraction", KSP_DOUBLE(options.val_fraction)},
      {"eval_stride", KSP_INT(options.eval_stride)},
      {"save_checkpoints", KSP_BOOL(options.save_checkpoints)},
      {"grad_clip_norm", KSP_DOUBLE(options.grad_clip_norm)},
  };
  return table;
}

#undef KSP_DOUBLE
#undef KSP_INT
#undef KSP_BOOL

}  // namespace

void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, field] : fields()) keys.push_back(name);
  return keys;
}

std::string config_value(const ExperimentConfig& cfg, const std::string& key) {
  for (const auto& [name, field] : fields())
    if (name == key) return field.get(cfg);
  throw ConfigError("unknown config key '" + key + "'");
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::string out = "# ksp experiment config\n";
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_config_value(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void save_config_file(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file '" + path + "'");
  out << to_config_text(cfg);
}

std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("KSP_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  const std::string s(v);
  std::uint64_t out = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("KSP_SEED is not an unsigned integer: '" + s + "'");
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL) ^ 0xD1B54A32D192ED03ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace ksp
