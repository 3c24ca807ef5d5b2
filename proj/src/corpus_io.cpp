// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#include <array>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ksp/synthdata.hpp"

namespace fs = std::filesystem;

namespace ksp {

namespace {

constexpr std::array<char, 8> kSeqMagic = {'K', 'S', 'P', 'S', 'E', 'Q', '0', '1'};

std::string seq_file_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq_%04d.bin", id);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  T out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("corpus config key '" + key + "': bad value '" + v + "'");
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

void write_i32(std::ofstream& out, std::int32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::int32_t read_i32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return static_cast<std::int32_t>(v);
}

}  // namespace

std::string to_synth_config_text(const SynthConfig& cfg) {
  std::string couplings;
  for (std::size_t i = 0; i < cfg.couplings.size(); ++i) {
    if (i) couplings += ";";
    couplings += std::to_string(cfg.couplings[i].leader) + ":" +
                 std::to_string(cfg.couplings[i].follower) + ":" +
                 format_double(cfg.couplings[i].probability);
  }
  std::string out = "# ksp synthetic corpus\n";
  out += "num_sequences = " + std::to_string(cfg.num_sequences) + "\n";
  out += "frames_per_sequence = " + std::to_string(cfg.frames_per_sequence) + "\n";
  out += "num_aus = " + std::to_string(cfg.num_aus) + "\n";
  out += "image_height = " + std::to_string(cfg.image_height) + "\n";
  out += "image_width = " + std::to_string(cfg.image_width) + "\n";
  out += "image_channels = " + std::to_string(cfg.image_channels) + "\n";
  out += "couplings = " + couplings + "\n";
  out += "min_event_frames = " + std::to_string(cfg.min_event_frames) + "\n";
  out += "mean_event_frames = " + format_double(cfg.mean_event_frames) + "\n";
  out += "active_prob = " + format_double(cfg.active_prob) + "\n";
  out += "au_amplitude = " + format_double(cfg.au_amplitude) + "\n";
  out += "noise_std = " + format_double(cfg.noise_std) + "\n";
  out += "motion_speed = " + format_double(cfg.motion_speed) + "\n";
  out += "motion_amplitude = " + format_double(cfg.motion_amplitude) + "\n";
  out += "desync_prob = " + format_double(cfg.desync_prob) + "\n";
  out += "seed = " + std::to_string(cfg.seed) + "\n";
  return out;
}

SynthConfig parse_synth_config_text(const std::string& text) {
  SynthConfig cfg;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("corpus config: expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (key == "num_sequences") cfg.num_sequences = parse_num<int>(key, v);
    else if (key == "frames_per_sequence") cfg.frames_per_sequence = parse_num<int>(key, v);
    else if (key == "num_aus") cfg.num_aus = parse_num<int>(key, v);
    else if (key == "image_height") cfg.image_height = parse_num<int>(key, v);
    else if (key == "image_width") cfg.image_width = parse_num<int>(key, v);
    else if (key == "image_channels") cfg.image_channels = parse_num<int>(key, v);
    else if (key == "min_event_frames") cfg.min_event_frames = parse_num<int>(key, v);
    else if (key == "mean_event_frames") cfg.mean_event_frames = parse_num<double>(key, v);
    else if (key == "active_prob") cfg.active_prob = parse_num<double>(key, v);
    else if (key == "au_amplitude") cfg.au_amplitude = parse_num<double>(key, v);
    else if (key == "noise_std") cfg.noise_std = parse_num<double>(key, v);
    else if (key == "motion_speed") cfg.motion_speed = parse_num<double>(key, v);
    else if (key == "motion_amplitude") cfg.motion_amplitude = parse_num<double>(key, v);
    else if (key == "desync_prob") cfg.desync_prob = parse_num<double>(key, v);
    else if (key == "seed") cfg.seed = parse_num<std::uint64_t>(key, v);
    else if (key == "couplings") {
      cfg.couplings.clear();
      for (const auto& item : split(v, ';')) {
        if (trim(item).empty()) continue;
        const auto parts = split(trim(item), ':');
        if (parts.size() != 3) throw ConfigError("couplings: expected leader:follower:probability");
        cfg.couplings.push_back({parse_num<int>(key, parts[0]), parse_num<int>(key, parts[1]),
                                 parse_num<double>(key, parts[2])});
      }
    } else {
      throw ConfigError("unknown corpus config key '" + key + "'");
    }
  }
  validate(cfg);
  return cfg;
}

void save_corpus(const LabeledCorpus& corpus, const SynthConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "corpus.cfg");
    if (!out) throw DataError("cannot write corpus.cfg in '" + dir + "'");
    out << to_synth_config_text(cfg);
  }
  std::ofstream labels(fs::path(dir) / "labels.csv");
  if (!labels) throw DataError("cannot write labels.csv in '" + dir + "'");
  labels << "sequence,frame_index";
  for (int u = 0; u < corpus.num_aus; ++u) labels << ",au_" << u;
  labels << ",visible\n";

  for (const auto& seq : corpus.sequences) {
    std::ofstream out(fs::path(dir) / seq_file_name(seq.id), std::ios::binary);
    if (!out) throw DataError("cannot write sequence file in '" + dir + "'");
    out.write(kSeqMagic.data(), kSeqMagic.size());
    write_i32(out, seq.num_frames());
    write_i32(out, corpus.image_height);
    write_i32(out, corpus.image_width);
    write_i32(out, corpus.image_channels);
    for (const auto& f : seq.frames) {
      for (float v : f.image) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &v, 4);
        write_i32(out, static_cast<std::int32_t>(bits));
      }
    }
    for (int t = 0; t < seq.num_frames(); ++t) {
      labels << seq.id << "," << seq.frames[t].frame_index;
      const auto& y = *seq.frames[t].label;
      for (int u = 0; u < corpus.num_aus; ++u) labels << "," << static_cast<int>(y[u]);
      labels << "," << static_cast<int>(seq.visible[t]) << "\n";
    }
  }
}

SynthConfig load_synth_config(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "corpus.cfg");
  if (!in) throw DataError("no corpus.cfg in '" + dir + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synth_config_text(ss.str());
}

LabeledCorpus load_corpus(const std::string& dir) {
  const SynthConfig cfg = load_synth_config(dir);
  LabeledCorpus corpus;
  corpus.num_aus = cfg.num_aus;
  corpus.image_height = cfg.image_height;
  corpus.image_width = cfg.image_width;
  corpus.image_channels = cfg.image_channels;
  const std::size_t frame_size = corpus.frame_size();

  std::ifstream labels(fs::path(dir) / "labels.csv");
  if (!labels) throw DataError("no labels.csv in '" + dir + "'");
  std::string line;
  std::getline(labels, line);
  std::map<int, std::vector<std::vector<std::string>>> rows;
  while (std::getline(labels, line)) {
    if (trim(line).empty()) continue;
    auto cols = split(trim(line), ',');
    if (cols.size() != static_cast<std::size_t>(corpus.num_aus) + 3)
      throw DataError("labels.csv: wrong column count");
    rows[parse_num<int>("sequence", cols[0])].push_back(std::move(cols));
  }

  std::size_t visible = 0, total = 0;
  for (auto& [id, seq_rows] : rows) {
    std::ifstream in(fs::path(dir) / seq_file_name(id), std::ios::binary);
    if (!in) throw DataError("missing " + seq_file_name(id));
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (magic != kSeqMagic) throw DataError(seq_file_name(id) + ": bad magic");
    const int frames = read_i32(in);
    const int h = read_i32(in), w = read_i32(in), c = read_i32(in);
    if (h != corpus.image_height || w != corpus.image_width || c != corpus.image_channels)
      throw DataError(seq_file_name(id) + ": image shape disagrees with corpus.cfg");
    if (frames != static_cast<int>(seq_rows.size()))
      throw DataError(seq_file_name(id) + ": frame count disagrees with labels.csv");

    Sequence seq;
    seq.id = id;
    seq.frames.resize(frames);
    seq.visible.resize(frames);
    for (int t = 0; t < frames; ++t) {
      auto& f = seq.frames[t];
      f.image.resize(frame_size);
      for (auto& v : f.image) {
        const auto bits = static_cast<std::uint32_t>(read_i32(in));
        std::memcpy(&v, &bits, 4);
      }
      const auto& cols = seq_rows[t];
      f.frame_index = parse_num<std::int64_t>("frame_index", cols[1]);
      AULabelVector y(corpus.num_aus);
      for (int u = 0; u < corpus.num_aus; ++u) y[u] = parse_num<int>("au", cols[2 + u]) != 0;
      f.label = std::move(y);
      seq.visible[t] = parse_num<int>("visible", cols.back()) != 0;
      visible += seq.visible[t];
    }
    if (!in) throw DataError(seq_file_name(id) + ": truncated");
    total += frames;
    corpus.sequences.push_back(std::move(seq));
  }
  corpus.label_ratio = total ? static_cast<double>(visible) / static_cast<double>(total) : 1.0;
  return corpus;
}

std::string corpus_hash(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const auto& p : files) {
    for (char ch : p.filename().string()) mix(static_cast<unsigned char>(ch));
    std::ifstream in(p, std::ios::binary);
    char buf[1 << 14];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
      for (std::streamsize i = 0; i < in.gcount(); ++i) mix(static_cast<unsigned char>(buf[i]));
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace ksp
