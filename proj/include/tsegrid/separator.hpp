// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_SEPARATOR_HPP_
#define TSEGRID_SEPARATOR_HPP_

#include <cmath>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "tsegrid/cues.hpp"
#include "tsegrid/dsp.hpp"
#include "tsegrid/nn.hpp"
#include "tsegrid/scenes.hpp"

namespace tsegrid {

// ---------------------------------------------------------------------------
// ModelConfig. The desk preset trains in minutes on one CPU core while
// exercising every code path; the paper preset carries the published sizes
// and is used for structure tests only.
// ---------------------------------------------------------------------------
struct ModelConfig {
  std::string preset = "desk";
  size_t fusion_channels = 16;
  size_t lstm_hidden = 24;
  size_t lstm_feature = 16;
  size_t n_blocks = 2;
  size_t heads = 2;
  size_t attn_dim = 32;   // inner width of the cross-frame self-attention
  size_t cue_dim = 32;    // embedding dim of every cue stream
  size_t voice_heads = 4;
  size_t win = 128, hop = 64;
  int sample_rate = 16000;
  std::set<CueKind> active_cues = {CueKind::lip};

  size_t bins() const { return win / 2 + 1; }

  static ModelConfig desk() { return ModelConfig{}; }

  static ModelConfig paper() {
    ModelConfig c;
    c.preset = "paper";
    c.fusion_channels = 128;
    c.lstm_hidden = 240;
    c.lstm_feature = 128;
    c.n_blocks = 6;
    c.heads = 4;
    c.attn_dim = 256;
    c.cue_dim = 256;
    c.voice_heads = 4;
    return c;
  }

  void validate() const {
    if (!active_cues.count(CueKind::lip))
      throw ConfigError("model: the lip cue is always required");
    if (n_blocks < 1) throw ConfigError("model: n_blocks must be >= 1");
    if (fusion_channels < 1 || lstm_hidden < 1 || lstm_feature < 1)
      throw ConfigError("model: zero-sized layer");
    if (attn_dim % heads != 0)
      throw ConfigError("model: attn_dim not divisible by heads");
    if (cue_dim % voice_heads != 0)
      throw ConfigError("model: cue_dim not divisible by voice_heads");
    if (win == 0 || hop == 0 || win % 2 != 0 || (win & (win - 1)) != 0)
      throw ConfigError("model: window must be a power of two");
  }

  std::vector<CueKind> cue_order() const {
    std::vector<CueKind> out;
    for (CueKind k : {CueKind::lip, CueKind::expression, CueKind::face,
                      CueKind::voice})
      if (active_cues.count(k)) out.push_back(k);
    return out;
  }

  std::string cues_label() const {
    if (active_cues.size() == 1) return "Lip";
    std::string s = "Lip";
    if (active_cues.count(CueKind::expression)) s += "-Expr";
    if (active_cues.count(CueKind::face)) s += "-Face";
    if (active_cues.count(CueKind::voice)) s += "-Aux";
    return s;
  }
};

// ---------------------------------------------------------------------------
// GridBlock: intra-frame full-band module (frequency-wise bi-LSTM with
// per-direction feature projection, 1D transposed conv back to the fusion
// width, residual), sub-band temporal module (same along time), and
// cross-frame self-attention over flattened channel x frequency features.
// Residual connections wrap each sub-module; shape is preserved.
// ---------------------------------------------------------------------------
template <typename T>
struct GridBlock {
  size_t channels = 0, bins = 0, hidden = 0, feature = 0;
  BiLstm<T> lstm_freq, lstm_time;
  LinearLayer<T> proj_ff, proj_fb, proj_tf, proj_tb;
  ConvT2dLayer<T> deconv_f, deconv_t;
  Mha<T> attn;

  GridBlock() = default;
  GridBlock(const std::string& name, size_t c, size_t f, size_t hidden_,
            size_t feature_, size_t attn_dim, size_t heads)
      : channels(c), bins(f), hidden(hidden_), feature(feature_),
        lstm_freq(name + ".freq.lstm", c, hidden_),
        lstm_time(name + ".time.lstm", c, hidden_),
        proj_ff(name + ".freq.pf", hidden_, feature_),
        proj_fb(name + ".freq.pb", hidden_, feature_),
        proj_tf(name + ".time.pf", hidden_, feature_),
        proj_tb(name + ".time.pb", hidden_, feature_),
        deconv_f(name + ".freq.dc", 2 * feature_, c, 1, 3, 1, 1, 0, 1),
        deconv_t(name + ".time.dc", 2 * feature_, c, 3, 1, 1, 1, 1, 0),
        attn(name + ".attn", c * f, attn_dim, heads) {}

  void init(uint64_t seed) {
    lstm_freq.init(seed);
    lstm_time.init(seed);
    proj_ff.init(seed);
    proj_fb.init(seed);
    proj_tf.init(seed);
    proj_tb.init(seed);
    deconv_f.init(seed);
    deconv_t.init(seed);
    attn.init(seed);
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    const Shape& s = x.value().shape;
    if (s.size() != 3 || s[0] != channels || s[2] != bins)
      throw ShapeError("gridblock: input " + shape_str(s) + " expected [" +
                       std::to_string(channels) + ",T," +
                       std::to_string(bins) + "]");
    size_t tt = s[1], ff = s[2];

    // (a) intra-frame full-band: scan frequency, frames batched
    {
      Var<T> xa = permute3(x, {2, 1, 0});  // [F, T, C]
      Var<T> h = lstm_freq.forward(g, xa);  // [F, T, 2H]
      Var<T> flat = reshape(h, {ff * tt, 2 * hidden});
      Var<T> pf = proj_ff.forward(g, narrow(flat, 1, 0, hidden));
      Var<T> pb = proj_fb.forward(g, narrow(flat, 1, hidden, hidden));
      Var<T> p = concat<T>(1, {pf, pb});  // [F*T, 2P]
      Var<T> pr = permute3(reshape(p, {ff, tt, 2 * feature}), {2, 1, 0});
      Var<T> y = deconv_f.forward(g, pr);  // [C, T, F]
      x = add(x, y);
    }

    // (b) sub-band temporal: scan time, frequency bands batched
    {
      Var<T> xb = permute3(x, {1, 2, 0});  // [T, F, C]
      Var<T> h = lstm_time.forward(g, xb);  // [T, F, 2H]
      Var<T> flat = reshape(h, {tt * ff, 2 * hidden});
      Var<T> pf = proj_tf.forward(g, narrow(flat, 1, 0, hidden));
      Var<T> pb = proj_tb.forward(g, narrow(flat, 1, hidden, hidden));
      Var<T> p = concat<T>(1, {pf, pb});
      Var<T> pr = permute3(reshape(p, {tt, ff, 2 * feature}), {2, 0, 1});
      Var<T> y = deconv_t.forward(g, pr);  // [C, T, F]
      x = add(x, y);
    }

    // (c) cross-frame self-attention over flattened channel x frequency
    {
      Var<T> xc = reshape(permute3(x, {1, 0, 2}), {tt, channels * ff});
      Var<T> y = attn.forward(g, xc, xc, xc);  // [T, C*F]
      Var<T> yr = permute3(reshape(y, {tt, channels, ff}), {1, 0, 2});
      x = add(x, yr);
    }
    return x;
  }

  void collect(ParamList<T>& out) {
    lstm_freq.collect(out);
    proj_ff.collect(out);
    proj_fb.collect(out);
    deconv_f.collect(out);
    lstm_time.collect(out);
    proj_tf.collect(out);
    proj_tb.collect(out);
    deconv_t.collect(out);
    attn.collect(out);
  }
};

// fuse: tile each [D,T] cue across frequency, concatenate with the two
// spectrogram channels, 3x3 conv to the fusion width
template <typename T>
Var<T> fuse_features(Graph<T>& g, Var<T> spec_ri,
                     const std::vector<Var<T>>& cue_streams,
                     const std::vector<std::string>& cue_names,
                     Conv2dLayer<T>& fuse_conv) {
  const Shape& ss = spec_ri.value().shape;
  if (ss.size() != 3 || ss[0] != 2)
    throw ShapeError("fuse: spectrogram " + shape_str(ss));
  size_t tt = ss[1], ff = ss[2];
  std::vector<Var<T>> chans = {spec_ri};
  for (size_t i = 0; i < cue_streams.size(); ++i) {
    const Shape& cs = cue_streams[i].value().shape;
    if (cs.size() != 2 || cs[1] != tt)
      throw ShapeError("fuse: cue '" +
                       (i < cue_names.size() ? cue_names[i] : "?") +
                       "' has " + shape_str(cs) + ", expected [D," +
                       std::to_string(tt) + "]");
    chans.push_back(expand_last(cue_streams[i], ff));  // [D, T, F]
  }
  Var<T> stacked = concat<T>(0, chans);
  return fuse_conv.forward(g, stacked);
}

// ---------------------------------------------------------------------------
// The full system: STFT encoder, reference encoders with missing masking,
// fusion, n_blocks GridBlocks, transposed-conv decoding head, iSTFT.
// ---------------------------------------------------------------------------
template <typename T>
struct Model {
  ModelConfig cfg;

  std::unique_ptr<LipEncoder<T>> lip_enc;
  std::unique_ptr<ImageEncoder<T>> expr_enc;
  std::unique_ptr<ImageEncoder<T>> face_enc;
  std::unique_ptr<VoiceEncoder<T>> voice_enc;
  std::unique_ptr<VTcn<T>> lip_vtcn, expr_vtcn, face_vtcn, voice_vtcn;
  Conv2dLayer<T> fuse_conv;
  std::vector<GridBlock<T>> blocks;
  ConvT2dLayer<T> decoder;

  explicit Model(const ModelConfig& config) : cfg(config) {
    cfg.validate();
    size_t d = cfg.cue_dim;
    size_t in_ch = 2;
    if (cfg.active_cues.count(CueKind::lip)) {
      lip_enc = std::make_unique<LipEncoder<T>>("lip", d);
      lip_vtcn = std::make_unique<VTcn<T>>("lip.vtcn", d);
      in_ch += d;
    }
    if (cfg.active_cues.count(CueKind::expression)) {
      expr_enc = std::make_unique<ImageEncoder<T>>("expr", d);
      expr_vtcn = std::make_unique<VTcn<T>>("expr.vtcn", d);
      in_ch += d;
    }
    if (cfg.active_cues.count(CueKind::face)) {
      face_enc = std::make_unique<ImageEncoder<T>>("face", d);
      face_vtcn = std::make_unique<VTcn<T>>("face.vtcn", d);
      in_ch += d;
    }
    if (cfg.active_cues.count(CueKind::voice)) {
      voice_enc = std::make_unique<VoiceEncoder<T>>("voice", d, cfg.bins(),
                                                    cfg.voice_heads);
      voice_vtcn = std::make_unique<VTcn<T>>("voice.vtcn", d);
      in_ch += d;
    }
    fuse_conv = Conv2dLayer<T>("fuse", in_ch, cfg.fusion_channels, 3, 3, 1, 1,
                               1, 1);
    for (size_t b = 0; b < cfg.n_blocks; ++b)
      blocks.emplace_back("block" + std::to_string(b), cfg.fusion_channels,
                          cfg.bins(), cfg.lstm_hidden, cfg.lstm_feature,
                          cfg.attn_dim, cfg.heads);
    decoder = ConvT2dLayer<T>("decoder", cfg.fusion_channels, 2, 3, 3, 1, 1, 1,
                              1);
  }

  void init(uint64_t seed) {
    if (lip_enc) lip_enc->init(seed);
    if (lip_vtcn) lip_vtcn->init(seed);
    if (expr_enc) expr_enc->init(seed);
    if (expr_vtcn) expr_vtcn->init(seed);
    if (face_enc) face_enc->init(seed);
    if (face_vtcn) face_vtcn->init(seed);
    if (voice_enc) voice_enc->init(seed);
    if (voice_vtcn) voice_vtcn->init(seed);
    fuse_conv.init(seed);
    for (GridBlock<T>& b : blocks) b.init(seed);
    decoder.init(seed);
  }

  ParamList<T> parameters() {
    ParamList<T> out;
    if (lip_enc) {
      lip_enc->collect(out);
      lip_vtcn->collect(out);
    }
    if (expr_enc) {
      expr_enc->collect(out);
      expr_vtcn->collect(out);
    }
    if (face_enc) {
      face_enc->collect(out);
      face_vtcn->collect(out);
    }
    if (voice_enc) {
      voice_enc->collect(out);
      voice_vtcn->collect(out);
    }
    fuse_conv.collect(out);
    for (GridBlock<T>& b : blocks) b.collect(out);
    decoder.collect(out);
    return out;
  }

  // n_blocks GridBlocks then the decoding head
  Var<T> separate(Graph<T>& g, Var<T> fused) {
    Var<T> x = fused;
    for (GridBlock<T>& b : blocks) x = b.forward(g, x);
    return decoder.forward(g, x);  // [2, T, F]
  }

  // Full pipeline: mixture waveform in, estimated waveform out. The mask
  // zeroes lip/expression embedding columns before interpolation and the
  // V-TCN; face and voice streams are never masked. A null mask means all
  // frames present. Streams belonging to inactive cues are ignored.
  Var<T> forward_graph(Graph<T>& g, const Scene<T>& scene,
                       const MissingMask* mask) {
    if (scene.mixture.size() < cfg.win)
      throw InputError("forward: mixture shorter than one window");
    double rms = 0.0;
    for (const T& v : scene.mixture)
      rms += static_cast<double>(v) * static_cast<double>(v);
    rms = std::sqrt(rms / static_cast<double>(scene.mixture.size()));
    if (rms < 1e-9) rms = 1e-9;
    std::vector<T> norm_mix(scene.mixture.size());
    for (size_t i = 0; i < norm_mix.size(); ++i)
      norm_mix[i] = static_cast<T>(static_cast<double>(scene.mixture[i]) / rms);
    Spectrogram<T> mix_spec =
        stft(norm_mix, cfg.win, cfg.hop, cfg.sample_rate);
    size_t t_audio = mix_spec.frames;
    Var<T> spec_ri = g.constant(mix_spec.values);

    std::vector<Var<T>> streams;
    std::vector<std::string> names;
    for (CueKind k : cfg.cue_order()) {
      switch (k) {
        case CueKind::lip: {
          if (scene.lip_frames.size() == 0)
            throw InputError("forward: lip stream required but missing");
          Var<T> emb = lip_enc->forward(g, g.constant(scene.lip_frames));
          if (mask) emb = mask_cue_columns(g, emb, *mask);
          emb = interpolate_time(g, emb, t_audio);
          streams.push_back(lip_vtcn->forward(g, emb));
          break;
        }
        case CueKind::expression: {
          if (scene.expr_frames.size() == 0)
            throw InputError("forward: expression stream required but missing");
          Var<T> emb = expr_enc->forward_frames(g, g.constant(scene.expr_frames));
          if (mask) emb = mask_cue_columns(g, emb, *mask);
          emb = interpolate_time(g, emb, t_audio);
          streams.push_back(expr_vtcn->forward(g, emb));
          break;
        }
        case CueKind::face: {
          if (scene.face_image.size() == 0)
            throw InputError("forward: face image required but missing");
          Var<T> emb = face_enc->forward_image(g, g.constant(scene.face_image));
          emb = interpolate_time(g, emb, t_audio);  // tiled: static identity
          streams.push_back(face_vtcn->forward(g, emb));
          break;
        }
        case CueKind::voice: {
          if (scene.enrollment.samples.size() < cfg.win)
            throw InputError("forward: enrollment audio required but missing");
          std::vector<T> norm_enr = scene.enrollment.samples;
          double erms = 0.0;
          for (const T& v : norm_enr)
            erms += static_cast<double>(v) * static_cast<double>(v);
          erms = std::sqrt(erms / static_cast<double>(norm_enr.size()));
          if (erms < 1e-9) erms = 1e-9;
          for (T& v : norm_enr)
            v = static_cast<T>(static_cast<double>(v) / erms);
          Spectrogram<T> enr_spec =
              stft(norm_enr, cfg.win, cfg.hop, cfg.sample_rate);
          Var<T> emb = voice_enc->forward(g, enr_spec, mix_spec);
          emb = interpolate_time(g, emb, t_audio);
          streams.push_back(voice_vtcn->forward(g, emb));
          break;
        }
      }
      names.push_back(cue_name(k));
    }

    Var<T> fused = fuse_features(g, spec_ri, streams, names, fuse_conv);
    Var<T> est_spec = separate(g, fused);
    Var<T> wave = istft_op(est_spec, cfg.win, cfg.hop, scene.mixture.size());
    return scale(wave, rms);  // back to the input scale
  }

  // forward-only convenience
  std::vector<T> forward(const Scene<T>& scene, const MissingMask* mask) {
    Graph<T> g;
    g.grad_enabled = false;
    Var<T> out = forward_graph(g, scene, mask);
    return out.value().data;
  }
};

}  // namespace tsegrid

#endif  // TSEGRID_SEPARATOR_HPP_
