// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_SCENES_HPP_
#define TSEGRID_SCENES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tsegrid/common.hpp"
#include "tsegrid/random.hpp"
#include "tsegrid/tensor.hpp"
#include "tsegrid/wav.hpp"

namespace tsegrid {

// Deterministic synthetic scenes: harmonic-plus-formant speech stand-ins,
// mouth-opening lip frames synced to the target envelope, a static identity
// texture per speaker, and expression frames driven by a slow affect
// trajectory. Everything is a pure function of (seed, config).

struct SceneConfig {
  int sample_rate = 16000;
  double duration_s = 0.64;
  double enroll_s = 0.64;
  int video_fps = 25;
  size_t frame_hw = 16;
  // disjoint speaker id pools
  size_t target_lo = 0, target_hi = 20;
  size_t interferer_lo = 20, interferer_hi = 32;
  double noise_frac = 0.3;  // fraction of scenes with a non-speech interferer
  double sir_lo = -10.0, sir_hi = 0.0;
  size_t n_train = 200, n_dev = 24, n_test = 24;
  uint64_t seed = 1234;
  size_t mask_block = 10;
  double mask_fill = 0.0;

  size_t num_samples() const {
    return static_cast<size_t>(std::lround(duration_s * sample_rate));
  }
  size_t num_enroll_samples() const {
    return static_cast<size_t>(std::lround(enroll_s * sample_rate));
  }
  size_t num_video_frames() const {
    return static_cast<size_t>(std::lround(duration_s * video_fps));
  }

  void validate() const {
    if (target_hi <= target_lo || interferer_hi <= interferer_lo)
      throw ConfigError("scene: empty speaker pool");
    if (target_hi - target_lo < 2)
      throw ConfigError("scene: target pool needs at least 2 speakers");
    if (std::max(target_lo, interferer_lo) < std::min(target_hi, interferer_hi))
      throw ConfigError("scene: target and interferer speaker pools overlap");
    if (interferer_hi - interferer_lo < 3)
      throw ConfigError("scene: interferer pool needs at least 3 speakers "
                        "(one per split)");
    if (num_samples() < 128 || num_enroll_samples() < 128)
      throw ConfigError("scene: utterances must cover at least one STFT window");
    if (num_video_frames() < 1) throw ConfigError("scene: no video frames");
    if (sir_hi < sir_lo) throw ConfigError("scene: empty SIR range");
    if (noise_frac < 0.0 || noise_frac > 1.0)
      throw ConfigError("scene: noise_frac outside [0,1]");
  }
};

template <typename T>
struct EnrollmentAudio {
  std::vector<T> samples;
  int speaker_id = -1;
};

template <typename T>
struct Scene {
  size_t id = 0;
  uint64_t seed = 0;
  int speaker_id = -1;
  double sir_db = 0.0;
  int sample_rate = 16000;
  std::vector<T> target;
  std::vector<T> interferer;  // already scaled; mixture == target + interferer
  std::vector<T> mixture;
  EnrollmentAudio<T> enrollment;
  Tensor<T> lip_frames;   // [1, Tv, H, W]
  Tensor<T> face_image;   // [1, H, W]
  Tensor<T> expr_frames;  // [1, Tv, H, W]
};

struct MissingMask {
  std::vector<uint8_t> frames;  // 1 = present, 0 = missing
  double rate = 0.0;
  size_t block_len = 1;

  double missing_fraction() const {
    if (frames.empty()) return 0.0;
    size_t miss = 0;
    for (uint8_t f : frames) miss += (f == 0);
    return static_cast<double>(miss) / static_cast<double>(frames.size());
  }
};

struct SpeakerModel {
  int speaker_id = -1;
  double f0_base = 120.0;
  double formants[3] = {500.0, 1500.0, 2500.0};
  double formant_bw[3] = {80.0, 120.0, 160.0};
  uint64_t face_seed = 0;
  double expr_rate_hz = 0.6;

  static SpeakerModel from_id(uint64_t config_seed, int speaker_id) {
    Rng rng(mix_seed(config_seed, "speaker", static_cast<uint64_t>(speaker_id)));
    SpeakerModel m;
    m.speaker_id = speaker_id;
    m.f0_base = rng.uniform(95.0, 260.0);
    m.formants[0] = rng.uniform(320.0, 850.0);
    m.formants[1] = rng.uniform(950.0, 2300.0);
    m.formants[2] = rng.uniform(2400.0, 3300.0);
    for (int i = 0; i < 3; ++i) m.formant_bw[i] = rng.uniform(60.0, 180.0);
    m.face_seed = rng.next_u64();
    m.expr_rate_hz = rng.uniform(0.4, 0.9);
    return m;
  }
};

namespace scenedet {

constexpr double kPi = 3.14159265358979323846;

struct Biquad {
  double a1 = 0.0, a2 = 0.0, y1 = 0.0, y2 = 0.0;
  void set_resonator(double freq, double bw, int fs) {
    double r = std::exp(-kPi * bw / fs);
    a1 = -2.0 * r * std::cos(2.0 * kPi * freq / fs);
    a2 = r * r;
  }
  double step(double x) {
    double y = x - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

struct Utterance {
  std::vector<double> samples;       // peak-normalized
  std::vector<double> frame_rms;     // per video frame
  std::vector<double> frame_affect;  // per video frame
};

// harmonic pulse train + formant cascade, syllabic amplitude gating, and a
// slow affect trajectory that modulates the contour
inline Utterance synth_speech(const SpeakerModel& spk, uint64_t utt_seed,
                              size_t n, int fs, int fps) {
  Rng rng(utt_seed);
  double syl_hz = rng.uniform(2.5, 5.0);
  double syl_phase = rng.uniform(0.0, 2.0 * kPi);
  double slow_hz = rng.uniform(0.7, 1.6);
  double slow_phase = rng.uniform(0.0, 2.0 * kPi);
  double vib_hz = rng.uniform(3.0, 6.0);
  double vib_phase = rng.uniform(0.0, 2.0 * kPi);
  double drift = rng.uniform(-0.06, 0.06);
  double affect_phase = rng.uniform(0.0, 2.0 * kPi);

  Biquad f1, f2, f3;
  f1.set_resonator(spk.formants[0] * rng.uniform(0.96, 1.04), spk.formant_bw[0], fs);
  f2.set_resonator(spk.formants[1] * rng.uniform(0.96, 1.04), spk.formant_bw[1], fs);
  f3.set_resonator(spk.formants[2] * rng.uniform(0.96, 1.04), spk.formant_bw[2], fs);

  Utterance u;
  u.samples.resize(n, 0.0);
  double phase = rng.uniform(0.0, 1.0);
  for (size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / fs;
    double f0 = spk.f0_base *
                (1.0 + drift * t + 0.03 * std::sin(2.0 * kPi * vib_hz * t + vib_phase));
    phase += f0 / fs;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    double env = 0.2 + 0.8 * std::pow(0.5 + 0.5 * std::sin(2.0 * kPi * syl_hz * t + syl_phase), 2.0);
    env *= 0.65 + 0.35 * std::sin(2.0 * kPi * slow_hz * t + slow_phase);
    if (env < 0.05) env = 0.05;
    double affect = 0.7 + 0.3 * std::sin(2.0 * kPi * spk.expr_rate_hz * t + affect_phase);
    double excitation = pulse + 0.02 * rng.normal();
    double voiced = f3.step(f2.step(f1.step(excitation)));
    u.samples[i] = env * affect * voiced;
  }
  double peak = 1e-12;
  for (double v : u.samples) peak = std::max(peak, std::abs(v));
  for (double& v : u.samples) v = 0.5 * v / peak;

  size_t tv = static_cast<size_t>(std::lround(static_cast<double>(n) / fs * fps));
  tv = std::max<size_t>(tv, 1);
  size_t span = n / tv;
  u.frame_rms.resize(tv);
  u.frame_affect.resize(tv);
  for (size_t v = 0; v < tv; ++v) {
    size_t lo = v * span, hi = (v + 1 == tv) ? n : (v + 1) * span;
    double acc = 0.0;
    for (size_t i = lo; i < hi; ++i) acc += u.samples[i] * u.samples[i];
    u.frame_rms[v] = std::sqrt(acc / std::max<size_t>(1, hi - lo));
    double tc = (static_cast<double>(lo + hi) / 2.0) / fs;
    u.frame_affect[v] =
        0.7 + 0.3 * std::sin(2.0 * kPi * spk.expr_rate_hz * tc + affect_phase);
  }
  return u;
}

// band-passed modulated noise, the non-speech interferer class
inline std::vector<double> synth_noise(uint64_t seed, size_t n, int fs) {
  Rng rng(seed);
  Biquad band;
  band.set_resonator(rng.uniform(400.0, 3200.0), rng.uniform(200.0, 900.0), fs);
  double mod_hz = rng.uniform(0.5, 3.0);
  double mod_phase = rng.uniform(0.0, 2.0 * kPi);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / fs;
    double env = 0.55 + 0.45 * std::sin(2.0 * kPi * mod_hz * t + mod_phase);
    out[i] = env * band.step(rng.normal());
  }
  double peak = 1e-12;
  for (double v : out) peak = std::max(peak, std::abs(v));
  for (double& v : out) v = 0.5 * v / peak;
  return out;
}

inline double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

// smooth ellipse "mouth" whose height follows the envelope
inline void render_lip_frame(double opening, uint64_t texture_seed,
                             uint64_t frame_seed, size_t hw, double* out) {
  Rng tex(texture_seed);
  std::vector<double> bg(hw * hw);
  for (double& v : bg) v = 0.75 + 0.08 * tex.normal();
  Rng fr(frame_seed);
  double cy = hw / 2.0, cx = hw / 2.0;
  double half_w = hw * 0.32;
  double half_h = 0.6 + 0.55 * hw * 0.5 * opening;
  for (size_t r = 0; r < hw; ++r)
    for (size_t c = 0; c < hw; ++c) {
      double dy = (r + 0.5 - cy) / half_h;
      double dx = (c + 0.5 - cx) / half_w;
      double d = dx * dx + dy * dy;
      double mouth = 1.0 / (1.0 + std::exp(8.0 * (d - 1.0)));  // soft inside
      double v = bg[r * hw + c] * (1.0 - mouth) + 0.12 * mouth;
      out[r * hw + c] = v + 0.01 * fr.normal();
    }
}

// static identity texture: seeded gaussian blobs, same for every utterance
inline void render_face(uint64_t face_seed, size_t hw, double* out) {
  Rng rng(face_seed);
  for (size_t i = 0; i < hw * hw; ++i) out[i] = 0.45;
  for (int blob = 0; blob < 7; ++blob) {
    double br = rng.uniform(0.0, static_cast<double>(hw));
    double bc = rng.uniform(0.0, static_cast<double>(hw));
    double sg = rng.uniform(1.2, 3.5);
    double amp = rng.uniform(-0.35, 0.35);
    for (size_t r = 0; r < hw; ++r)
      for (size_t c = 0; c < hw; ++c) {
        double d2 = (r - br) * (r - br) + (c - bc) * (c - bc);
        out[r * hw + c] += amp * std::exp(-d2 / (2.0 * sg * sg));
      }
  }
  for (size_t i = 0; i < hw * hw; ++i)
    out[i] = std::clamp(out[i], 0.0, 1.0);
}

// affect-driven pattern: two blobs whose row and brightness track the
// trajectory, over a neutral background
inline void render_expr_frame(double affect, uint64_t frame_seed, size_t hw,
                              double* out) {
  Rng fr(frame_seed);
  for (size_t i = 0; i < hw * hw; ++i) out[i] = 0.4 + 0.01 * fr.normal();
  double row = 3.0 + (hw - 7.0) * (affect - 0.4) / 0.6;
  double amp = 0.15 + 0.7 * (affect - 0.4) / 0.6;
  for (int side = 0; side < 2; ++side) {
    double bc = side ? hw * 0.3 : hw * 0.7;
    for (size_t r = 0; r < hw; ++r)
      for (size_t c = 0; c < hw; ++c) {
        double d2 = (r - row) * (r - row) + (c - bc) * (c - bc);
        out[r * hw + c] += amp * std::exp(-d2 / (2.0 * 1.8 * 1.8));
      }
  }
}

}  // namespace scenedet

// ---------------------------------------------------------------------------
// make_scene: the full generative recipe for one mixture instance
// ---------------------------------------------------------------------------
template <typename T>
Scene<T> make_scene(uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  using namespace scenedet;
  Rng rng(mix_seed(seed, "scene"));
  size_t n = cfg.num_samples();
  size_t tv = cfg.num_video_frames();
  size_t hw = cfg.frame_hw;

  size_t target_pool = cfg.target_hi - cfg.target_lo;
  int target_id =
      static_cast<int>(cfg.target_lo + rng.uniform_int(target_pool));
  SpeakerModel target_spk = SpeakerModel::from_id(cfg.seed, target_id);

  Utterance tgt = synth_speech(target_spk, mix_seed(seed, "tgt-utt"), n,
                               cfg.sample_rate, cfg.video_fps);

  bool noise_interferer = rng.uniform() < cfg.noise_frac;
  std::vector<double> interferer_raw;
  if (noise_interferer) {
    interferer_raw = synth_noise(mix_seed(seed, "noise"), n, cfg.sample_rate);
  } else {
    size_t int_pool = cfg.interferer_hi - cfg.interferer_lo;
    int int_id =
        static_cast<int>(cfg.interferer_lo + rng.uniform_int(int_pool));
    SpeakerModel int_spk = SpeakerModel::from_id(cfg.seed, int_id);
    interferer_raw = synth_speech(int_spk, mix_seed(seed, "int-utt"), n,
                                  cfg.sample_rate, cfg.video_fps)
                         .samples;
  }

  double sir_db = rng.uniform(cfg.sir_lo, cfg.sir_hi);
  double et = energy(tgt.samples);
  double ei = std::max(energy(interferer_raw), 1e-12);
  double beta = std::sqrt(et / ei * std::pow(10.0, -sir_db / 10.0));

  std::vector<double> interferer(n), mixture(n);
  double peak = 1e-12;
  for (size_t i = 0; i < n; ++i) {
    interferer[i] = beta * interferer_raw[i];
    mixture[i] = tgt.samples[i] + interferer[i];
    peak = std::max({peak, std::abs(mixture[i]), std::abs(tgt.samples[i]),
                     std::abs(interferer[i])});
  }
  double gain = (peak > 0.89) ? 0.89 / peak : 1.0;

  Scene<T> sc;
  sc.id = 0;
  sc.seed = seed;
  sc.speaker_id = target_id;
  sc.sir_db = sir_db;
  sc.sample_rate = cfg.sample_rate;
  sc.target.resize(n);
  sc.interferer.resize(n);
  sc.mixture.resize(n);
  for (size_t i = 0; i < n; ++i) {
    sc.target[i] = static_cast<T>(gain * tgt.samples[i]);
    sc.interferer[i] = static_cast<T>(gain * interferer[i]);
    sc.mixture[i] = sc.target[i] + sc.interferer[i];  // exact by construction
  }

  Utterance enr = synth_speech(target_spk, mix_seed(seed, "enroll"),
                               cfg.num_enroll_samples(), cfg.sample_rate,
                               cfg.video_fps);
  sc.enrollment.speaker_id = target_id;
  sc.enrollment.samples.resize(enr.samples.size());
  for (size_t i = 0; i < enr.samples.size(); ++i)
    sc.enrollment.samples[i] = static_cast<T>(enr.samples[i]);

  double max_rms = 1e-9;
  for (double v : tgt.frame_rms) max_rms = std::max(max_rms, v);
  sc.lip_frames = Tensor<T>({1, tv, hw, hw});
  sc.expr_frames = Tensor<T>({1, tv, hw, hw});
  std::vector<double> buf(hw * hw);
  for (size_t v = 0; v < tv; ++v) {
    render_lip_frame(tgt.frame_rms[v] / max_rms, target_spk.face_seed,
                     mix_seed(seed, "lipnoise", v), hw, buf.data());
    for (size_t i = 0; i < hw * hw; ++i)
      sc.lip_frames.data[v * hw * hw + i] = static_cast<T>(buf[i]);
    render_expr_frame(tgt.frame_affect[v], mix_seed(seed, "exprnoise", v), hw,
                      buf.data());
    for (size_t i = 0; i < hw * hw; ++i)
      sc.expr_frames.data[v * hw * hw + i] = static_cast<T>(buf[i]);
  }
  sc.face_image = Tensor<T>({1, hw, hw});
  render_face(target_spk.face_seed, hw, buf.data());
  for (size_t i = 0; i < hw * hw; ++i)
    sc.face_image.data[i] = static_cast<T>(buf[i]);
  return sc;
}

// ---------------------------------------------------------------------------
// missing masks: contiguous blocks dropped independently with probability
// `rate`; 0 marks a missing frame
// ---------------------------------------------------------------------------
inline MissingMask missing_mask(size_t t_video, double rate, size_t block_len,
                                uint64_t seed) {
  if (rate < 0.0 || rate > 1.0)
    throw ConfigError("missing_mask: rate outside [0,1]");
  if (block_len == 0) throw ConfigError("missing_mask: block_len == 0");
  MissingMask m;
  m.rate = rate;
  m.block_len = block_len;
  m.frames.assign(t_video, 1);
  Rng rng(mix_seed(seed, "mask"));
  for (size_t start = 0; start < t_video; start += block_len) {
    bool drop = rng.uniform() < rate;
    if (drop) {
      size_t end = std::min(t_video, start + block_len);
      for (size_t i = start; i < end; ++i) m.frames[i] = 0;
    }
  }
  return m;
}

// Zero-fills (or fill-value-fills) masked lip and expression frames. Face
// image and enrollment audio are never touched. Idempotent.
template <typename T>
Scene<T> apply_missing(const Scene<T>& scene, const MissingMask& mask,
                       double fill = 0.0) {
  size_t tv = scene.lip_frames.shape[1];
  if (mask.frames.size() != tv)
    throw ShapeError("apply_missing: mask length " +
                     std::to_string(mask.frames.size()) + " vs " +
                     std::to_string(tv) + " video frames");
  Scene<T> out = scene;
  size_t frame_elems = scene.lip_frames.shape[2] * scene.lip_frames.shape[3];
  for (size_t v = 0; v < tv; ++v) {
    if (mask.frames[v]) continue;
    for (size_t i = 0; i < frame_elems; ++i) {
      out.lip_frames.data[v * frame_elems + i] = static_cast<T>(fill);
      out.expr_frames.data[v * frame_elems + i] = static_cast<T>(fill);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// splits: contiguous id ranges with disjoint interferer sub-pools per split
// ---------------------------------------------------------------------------
struct SplitPlan {
  std::vector<size_t> train_ids, dev_ids, test_ids;
  SceneConfig train_cfg, dev_cfg, test_cfg;
};

inline uint64_t scene_seed(const SceneConfig& cfg, size_t id) {
  return mix_seed(cfg.seed, "scene-id", id);
}

inline SplitPlan make_split(const SceneConfig& cfg) {
  cfg.validate();
  SplitPlan plan;
  for (size_t i = 0; i < cfg.n_train; ++i) plan.train_ids.push_back(i);
  for (size_t i = 0; i < cfg.n_dev; ++i)
    plan.dev_ids.push_back(cfg.n_train + i);
  for (size_t i = 0; i < cfg.n_test; ++i)
    plan.test_ids.push_back(cfg.n_train + cfg.n_dev + i);

  size_t pool = cfg.interferer_hi - cfg.interferer_lo;
  size_t dev_share = std::max<size_t>(1, pool / 6);
  size_t test_share = std::max<size_t>(1, pool / 6);
  size_t train_share = pool - dev_share - test_share;
  if (train_share < 1)
    throw ConfigError("make_split: interferer pool too small to stay disjoint");
  plan.train_cfg = cfg;
  plan.train_cfg.interferer_hi = cfg.interferer_lo + train_share;
  plan.dev_cfg = cfg;
  plan.dev_cfg.interferer_lo = cfg.interferer_lo + train_share;
  plan.dev_cfg.interferer_hi = cfg.interferer_lo + train_share + dev_share;
  plan.test_cfg = cfg;
  plan.test_cfg.interferer_lo = cfg.interferer_lo + train_share + dev_share;
  plan.test_cfg.interferer_hi = cfg.interferer_hi;
  return plan;
}

// ---------------------------------------------------------------------------
// scene cache on disk
//
// <cache>/manifest.txt            split,id,seed,speaker_id,sir_db per line
// <cache>/<split>/<id>/*.wav      target, interferer, mixture, enrollment
// <cache>/<split>/<id>/*.ten      lip, face, expr tensors
//
// .ten layout (little-endian): u32 ndim, u32 dims[ndim], f32 data.
// ---------------------------------------------------------------------------

template <typename T>
void write_tensor_file(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write tensor: " + path);
  uint32_t nd = static_cast<uint32_t>(t.rank());
  os.write(reinterpret_cast<const char*>(&nd), 4);
  for (size_t d : t.shape) {
    uint32_t dd = static_cast<uint32_t>(d);
    os.write(reinterpret_cast<const char*>(&dd), 4);
  }
  for (const T& v : t.data) {
    float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
}

template <typename T>
Tensor<T> read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor: " + path);
  uint32_t nd = 0;
  is.read(reinterpret_cast<char*>(&nd), 4);
  Shape shape(nd);
  for (uint32_t i = 0; i < nd; ++i) {
    uint32_t d = 0;
    is.read(reinterpret_cast<char*>(&d), 4);
    shape[i] = d;
  }
  Tensor<T> t(shape);
  for (size_t i = 0; i < t.size(); ++i) {
    float f = 0.0f;
    is.read(reinterpret_cast<char*>(&f), 4);
    t.data[i] = static_cast<T>(f);
  }
  if (!is) throw IoError("truncated tensor: " + path);
  return t;
}

template <typename T>
void write_scene(const std::string& dir, const Scene<T>& sc) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_wav(dir + "/target.wav", sc.target, sc.sample_rate);
  write_wav(dir + "/interferer.wav", sc.interferer, sc.sample_rate);
  write_wav(dir + "/mixture.wav", sc.mixture, sc.sample_rate);
  write_wav(dir + "/enrollment.wav", sc.enrollment.samples, sc.sample_rate);
  write_tensor_file(dir + "/lip.ten", sc.lip_frames);
  write_tensor_file(dir + "/face.ten", sc.face_image);
  write_tensor_file(dir + "/expr.ten", sc.expr_frames);
}

template <typename T>
Scene<T> read_scene(const std::string& dir, size_t id, uint64_t seed,
                    int speaker_id, double sir_db) {
  Scene<T> sc;
  sc.id = id;
  sc.seed = seed;
  sc.speaker_id = speaker_id;
  sc.sir_db = sir_db;
  int rate = 16000;
  sc.target = read_wav<T>(dir + "/target.wav", &rate);
  sc.sample_rate = rate;
  sc.interferer = read_wav<T>(dir + "/interferer.wav");
  sc.mixture = read_wav<T>(dir + "/mixture.wav");
  sc.enrollment.samples = read_wav<T>(dir + "/enrollment.wav");
  sc.enrollment.speaker_id = speaker_id;
  sc.lip_frames = read_tensor_file<T>(dir + "/lip.ten");
  sc.face_image = read_tensor_file<T>(dir + "/face.ten");
  sc.expr_frames = read_tensor_file<T>(dir + "/expr.ten");
  return sc;
}

struct ManifestRow {
  std::string split;
  size_t id;
  uint64_t seed;
  int speaker_id;
  double sir_db;
};

inline std::string manifest_line(const ManifestRow& r) {
  std::ostringstream os;
  os << r.split << "," << r.id << "," << r.seed << "," << r.speaker_id << ","
     << format_fixed(r.sir_db, 6);
  return os.str();
}

inline std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  std::vector<ManifestRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestRow r;
    std::string field;
    std::getline(ls, r.split, ',');
    std::getline(ls, field, ',');
    r.id = std::stoul(field);
    std::getline(ls, field, ',');
    r.seed = std::stoull(field);
    std::getline(ls, field, ',');
    r.speaker_id = std::stoi(field);
    std::getline(ls, field, ',');
    r.sir_db = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

// Materializes the whole split on disk; returns the manifest rows written.
template <typename T>
std::vector<ManifestRow> generate_cache(const SceneConfig& cfg,
                                        const std::string& out_dir) {
  SplitPlan plan = make_split(cfg);
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  std::vector<ManifestRow> rows;
  auto emit = [&](const std::vector<size_t>& ids, const SceneConfig& scfg,
                  const std::string& split) {
    for (size_t id : ids) {
      uint64_t seed = scene_seed(cfg, id);
      Scene<T> sc = make_scene<T>(seed, scfg);
      sc.id = id;
      write_scene(out_dir + "/" + split + "/" + std::to_string(id), sc);
      rows.push_back({split, id, seed, sc.speaker_id, sc.sir_db});
    }
  };
  emit(plan.train_ids, plan.train_cfg, "train");
  emit(plan.dev_ids, plan.dev_cfg, "dev");
  emit(plan.test_ids, plan.test_cfg, "test");
  std::ofstream os(out_dir + "/manifest.txt", std::ios::trunc);
  if (!os) throw IoError("cannot write manifest in " + out_dir);
  for (const ManifestRow& r : rows) os << manifest_line(r) << "\n";
  return rows;
}

template <typename T>
std::vector<Scene<T>> load_split(const std::string& cache_dir,
                                 const std::string& split) {
  std::vector<ManifestRow> rows = read_manifest(cache_dir + "/manifest.txt");
  std::vector<Scene<T>> scenes;
  for (const ManifestRow& r : rows) {
    if (r.split != split) continue;
    scenes.push_back(read_scene<T>(cache_dir + "/" + split + "/" +
                                       std::to_string(r.id),
                                   r.id, r.seed, r.speaker_id, r.sir_db));
  }
  if (scenes.empty())
    throw IoError("no scenes for split '" + split + "' in " + cache_dir);
  return scenes;
}

}  // namespace tsegrid

#endif  // TSEGRID_SCENES_HPP_
