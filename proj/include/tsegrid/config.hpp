// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_CONFIG_HPP_
#define TSEGRID_CONFIG_HPP_

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>

#include "tsegrid/scenes.hpp"
#include "tsegrid/trainer.hpp"

namespace tsegrid {

// key=value configuration files: one pair per line, '#' comments, whitespace
// trimmed. Unknown keys are rejected so typos fail loudly.

struct KvConfig {
  std::map<std::string, std::string> kv;

  static KvConfig load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    KvConfig c;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected key=value");
      c.kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return c;
  }

  bool has(const std::string& key) const { return kv.count(key) > 0; }

  std::string get(const std::string& key, const std::string& dflt) const {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
  }

  double get_f(const std::string& key, double dflt) const {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw ConfigError("config key " + key + ": bad number '" + it->second +
                        "'");
    }
  }

  long long get_i(const std::string& key, long long dflt) const {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    try {
      return std::stoll(it->second);
    } catch (...) {
      throw ConfigError("config key " + key + ": bad integer '" + it->second +
                        "'");
    }
  }
};

inline const std::map<std::string, int>& known_config_keys() {
  static const std::map<std::string, int> kKeys = {
      {"cache_dir", 0},
      {"scene.sample_rate", 0},
      {"scene.duration_s", 0},
      {"scene.enroll_s", 0},
      {"scene.video_fps", 0},
      {"scene.frame_hw", 0},
      {"scene.target_lo", 0},
      {"scene.target_hi", 0},
      {"scene.interferer_lo", 0},
      {"scene.interferer_hi", 0},
      {"scene.noise_frac", 0},
      {"scene.sir_lo", 0},
      {"scene.sir_hi", 0},
      {"scene.n_train", 0},
      {"scene.n_dev", 0},
      {"scene.n_test", 0},
      {"scene.seed", 0},
      {"scene.mask_block", 0},
      {"scene.mask_fill", 0},
      {"model.preset", 0},
      {"model.fusion_channels", 0},
      {"model.lstm_hidden", 0},
      {"model.lstm_feature", 0},
      {"model.n_blocks", 0},
      {"model.heads", 0},
      {"model.attn_dim", 0},
      {"model.cue_dim", 0},
      {"model.voice_heads", 0},
      {"model.win", 0},
      {"model.hop", 0},
      {"train.batch_size", 0},
      {"train.lr_init", 0},
      {"train.plateau_patience", 0},
      {"train.stop_patience", 0},
      {"train.improve_delta", 0},
      {"train.max_epochs", 0},
      {"train.clip_norm", 0},
  };
  return kKeys;
}

inline void reject_unknown_keys(const KvConfig& c) {
  for (const auto& [key, value] : c.kv)
    if (!known_config_keys().count(key))
      throw ConfigError("unknown config key: " + key);
}

inline SceneConfig scene_config_from(const KvConfig& c) {
  SceneConfig s;
  s.sample_rate = static_cast<int>(c.get_i("scene.sample_rate", s.sample_rate));
  s.duration_s = c.get_f("scene.duration_s", s.duration_s);
  s.enroll_s = c.get_f("scene.enroll_s", s.enroll_s);
  s.video_fps = static_cast<int>(c.get_i("scene.video_fps", s.video_fps));
  s.frame_hw = static_cast<size_t>(c.get_i("scene.frame_hw", s.frame_hw));
  s.target_lo = static_cast<size_t>(c.get_i("scene.target_lo", s.target_lo));
  s.target_hi = static_cast<size_t>(c.get_i("scene.target_hi", s.target_hi));
  s.interferer_lo =
      static_cast<size_t>(c.get_i("scene.interferer_lo", s.interferer_lo));
  s.interferer_hi =
      static_cast<size_t>(c.get_i("scene.interferer_hi", s.interferer_hi));
  s.noise_frac = c.get_f("scene.noise_frac", s.noise_frac);
  s.sir_lo = c.get_f("scene.sir_lo", s.sir_lo);
  s.sir_hi = c.get_f("scene.sir_hi", s.sir_hi);
  s.n_train = static_cast<size_t>(c.get_i("scene.n_train", s.n_train));
  s.n_dev = static_cast<size_t>(c.get_i("scene.n_dev", s.n_dev));
  s.n_test = static_cast<size_t>(c.get_i("scene.n_test", s.n_test));
  s.seed = static_cast<uint64_t>(c.get_i("scene.seed", s.seed));
  s.mask_block = static_cast<size_t>(c.get_i("scene.mask_block", s.mask_block));
  s.mask_fill = c.get_f("scene.mask_fill", s.mask_fill);
  return s;
}

inline ModelConfig model_config_from(const KvConfig& c) {
  std::string preset = c.get("model.preset", "desk");
  ModelConfig m;
  if (preset == "desk")
    m = ModelConfig::desk();
  else if (preset == "paper")
    m = ModelConfig::paper();
  else
    throw ConfigError("model.preset must be desk or paper, got '" + preset +
                      "'");
  m.fusion_channels = static_cast<size_t>(
      c.get_i("model.fusion_channels", m.fusion_channels));
  m.lstm_hidden =
      static_cast<size_t>(c.get_i("model.lstm_hidden", m.lstm_hidden));
  m.lstm_feature =
      static_cast<size_t>(c.get_i("model.lstm_feature", m.lstm_feature));
  m.n_blocks = static_cast<size_t>(c.get_i("model.n_blocks", m.n_blocks));
  m.heads = static_cast<size_t>(c.get_i("model.heads", m.heads));
  m.attn_dim = static_cast<size_t>(c.get_i("model.attn_dim", m.attn_dim));
  m.cue_dim = static_cast<size_t>(c.get_i("model.cue_dim", m.cue_dim));
  m.voice_heads =
      static_cast<size_t>(c.get_i("model.voice_heads", m.voice_heads));
  m.win = static_cast<size_t>(c.get_i("model.win", m.win));
  m.hop = static_cast<size_t>(c.get_i("model.hop", m.hop));
  return m;
}

inline TrainConfig train_config_from(const KvConfig& c, ModelConfig model) {
  TrainConfig t;
  t.model = std::move(model);
  t.batch_size = static_cast<size_t>(c.get_i("train.batch_size", t.batch_size));
  t.lr_init = c.get_f("train.lr_init", t.lr_init);
  t.plateau_patience = static_cast<int>(
      c.get_i("train.plateau_patience", t.plateau_patience));
  t.stop_patience =
      static_cast<int>(c.get_i("train.stop_patience", t.stop_patience));
  t.improve_delta = c.get_f("train.improve_delta", t.improve_delta);
  t.max_epochs = static_cast<size_t>(c.get_i("train.max_epochs", t.max_epochs));
  t.clip_norm = c.get_f("train.clip_norm", t.clip_norm);
  t.mask_block = static_cast<size_t>(c.get_i("scene.mask_block", t.mask_block));
  return t;
}

// compute-thread cap: explicit request, clipped by TSEGRID_THREADS and the
// machine
inline size_t thread_cap(size_t requested) {
  size_t hw = std::max<unsigned>(1, std::thread::hardware_concurrency());
  size_t cap = hw;
  if (const char* env = std::getenv("TSEGRID_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) cap = static_cast<size_t>(v);
  }
  if (requested == 0) requested = 1;
  return std::min(requested, cap);
}

// serialized model config, written next to each checkpoint so evaluation can
// rebuild the exact architecture
inline std::string model_config_to_kv(const ModelConfig& m,
                                      double train_missing, uint64_t seed) {
  std::ostringstream os;
  os << "model.preset=" << m.preset << "\n";
  os << "model.fusion_channels=" << m.fusion_channels << "\n";
  os << "model.lstm_hidden=" << m.lstm_hidden << "\n";
  os << "model.lstm_feature=" << m.lstm_feature << "\n";
  os << "model.n_blocks=" << m.n_blocks << "\n";
  os << "model.heads=" << m.heads << "\n";
  os << "model.attn_dim=" << m.attn_dim << "\n";
  os << "model.cue_dim=" << m.cue_dim << "\n";
  os << "model.voice_heads=" << m.voice_heads << "\n";
  os << "model.win=" << m.win << "\n";
  os << "model.hop=" << m.hop << "\n";
  std::string cues;
  for (CueKind k : m.cue_order()) {
    if (!cues.empty()) cues += ",";
    cues += cue_name(k);
  }
  os << "cues=" << cues << "\n";
  os << "train_missing=" << format_fixed(train_missing, 4) << "\n";
  os << "seed=" << seed << "\n";
  return os.str();
}

struct CheckpointMeta {
  ModelConfig model;
  double train_missing = 0.0;
  uint64_t seed = 0;
};

inline CheckpointMeta checkpoint_meta_from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open checkpoint meta: " + path);
  KvConfig c;
  std::string line;
  while (std::getline(is, line)) {
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    c.kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  CheckpointMeta meta;
  meta.model = model_config_from(c);
  meta.model.preset = c.get("model.preset", "desk");
  meta.model.active_cues.clear();
  std::istringstream cs(c.get("cues", "lip"));
  std::string tok;
  while (std::getline(cs, tok, ','))
    if (!tok.empty()) meta.model.active_cues.insert(parse_cue(tok));
  meta.train_missing = c.get_f("train_missing", 0.0);
  meta.seed = static_cast<uint64_t>(c.get_i("seed", 0));
  return meta;
}

}  // namespace tsegrid

#endif  // TSEGRID_CONFIG_HPP_
