// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_CUES_HPP_
#define TSEGRID_CUES_HPP_

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "tsegrid/dsp.hpp"
#include "tsegrid/nn.hpp"
#include "tsegrid/scenes.hpp"

namespace tsegrid {

enum class CueKind { lip, expression, face, voice };

inline std::string cue_name(CueKind k) {
  switch (k) {
    case CueKind::lip: return "lip";
    case CueKind::expression: return "expr";
    case CueKind::face: return "face";
    case CueKind::voice: return "aux";
  }
  return "?";
}

inline CueKind parse_cue(const std::string& s) {
  if (s == "lip") return CueKind::lip;
  if (s == "expr" || s == "expression") return CueKind::expression;
  if (s == "face") return CueKind::face;
  if (s == "aux" || s == "voice") return CueKind::voice;
  throw ConfigError("unknown cue '" + s + "' (expected lip, expr, face, aux)");
}

// ---------------------------------------------------------------------------
// time interpolation: [D, T_in] -> [D, T_out] by linear interpolation along
// time; a single input column is tiled. Realized as a matmul with a constant
// interpolation matrix so the backward pass comes for free.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> interp_matrix(size_t t_in, size_t t_out) {
  if (t_out == 0) throw InputError("interpolate_time: zero output length");
  if (t_in == 0) throw InputError("interpolate_time: zero input length");
  Tensor<T> m({t_in, t_out});
  for (size_t j = 0; j < t_out; ++j) {
    if (t_in == 1) {
      m.at2(0, j) = T(1);
      continue;
    }
    double pos = (t_out == 1)
                     ? 0.0
                     : static_cast<double>(j) * static_cast<double>(t_in - 1) /
                           static_cast<double>(t_out - 1);
    size_t i0 = static_cast<size_t>(pos);
    if (i0 >= t_in - 1) {
      m.at2(t_in - 1, j) = T(1);
    } else {
      double frac = pos - static_cast<double>(i0);
      m.at2(i0, j) += static_cast<T>(1.0 - frac);
      m.at2(i0 + 1, j) += static_cast<T>(frac);
    }
  }
  return m;
}

template <typename T>
Var<T> interpolate_time(Graph<T>& g, Var<T> x, size_t t_out) {
  const Shape& s = x.value().shape;
  if (s.size() != 2) throw ShapeError("interpolate_time: expected [D,T]");
  if (s[1] == t_out) return x;
  return matmul(x, g.constant(interp_matrix<T>(s[1], t_out)));
}

// zero out missing columns of a [D, Tv] cue stream (before interpolation and
// before the V-TCN, per the missing protocol)
template <typename T>
Var<T> mask_cue_columns(Graph<T>& g, Var<T> emb, const MissingMask& mask) {
  const Shape& s = emb.value().shape;
  if (s.size() != 2 || s[1] != mask.frames.size())
    throw ShapeError("mask_cue_columns: emb " + shape_str(s) + " vs mask " +
                     std::to_string(mask.frames.size()));
  (void)g;
  Tensor<T> m({mask.frames.size()});
  for (size_t i = 0; i < mask.frames.size(); ++i)
    m[i] = mask.frames[i] ? T(1) : T(0);
  return mask_lastdim(emb, m);
}

// ---------------------------------------------------------------------------
// V-TCN: 5 stacked residual dilated conv layers (kernel 3, dilation 1, 2, 4,
// 8, 16), ReLU, per-channel layer norm, and a zero-initialized pointwise conv
// closing each branch -- the stack is the identity at init.
// ---------------------------------------------------------------------------
template <typename T>
struct VTcn {
  size_t channels = 0;
  struct Layer {
    Conv1dLayer<T> conv;
    ChanLayerNorm<T> ln;
    Conv1dLayer<T> point;
  };
  std::vector<Layer> layers;

  VTcn() = default;
  VTcn(const std::string& name, size_t d) : channels(d) {
    for (size_t i = 0; i < 5; ++i) {
      size_t dil = size_t(1) << i;
      std::string ln_name = name + ".l" + std::to_string(i);
      layers.push_back(Layer{
          Conv1dLayer<T>(ln_name + ".conv", d, d, 3, 1,
                         static_cast<int64_t>(dil), dil),
          ChanLayerNorm<T>(ln_name + ".ln", d),
          Conv1dLayer<T>(ln_name + ".point", d, d, 1)});
    }
  }

  void init(uint64_t seed) {
    for (Layer& l : layers) {
      l.conv.init(seed);
      l.ln.init(seed);
      l.point.w.init_const(0.0);  // residual branches vanish at init
      l.point.b.init_const(0.0);
    }
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    const Shape& s = x.value().shape;
    if (s.size() != 2 || s[0] != channels)
      throw ShapeError("vtcn: input " + shape_str(s) + " expected [" +
                       std::to_string(channels) + ",T]");
    for (Layer& l : layers) {
      Var<T> h = l.conv.forward(g, x);
      h = relu(h);
      h = l.ln.forward(g, h);
      h = l.point.forward(g, h);
      x = add(x, h);
    }
    return x;
  }

  void collect(ParamList<T>& out) {
    for (Layer& l : layers) {
      l.conv.collect(out);
      l.ln.collect(out);
      l.point.collect(out);
    }
  }
};

// ---------------------------------------------------------------------------
// shared conv building block: stride-2 residual stage
// ---------------------------------------------------------------------------
template <typename T>
struct ResStage2d {
  Conv2dLayer<T> conv1, conv2, skip;

  ResStage2d() = default;
  ResStage2d(const std::string& name, size_t cin, size_t cout)
      : conv1(name + ".c1", cin, cout, 3, 3, 2, 2, 1, 1),
        conv2(name + ".c2", cout, cout, 3, 3, 1, 1, 1, 1),
        skip(name + ".sk", cin, cout, 1, 1, 2, 2, 0, 0) {}

  void init(uint64_t seed) {
    conv1.init(seed);
    conv2.init(seed);
    skip.init(seed);
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    Var<T> h = conv2.forward(g, relu(conv1.forward(g, x)));
    return relu(add(h, skip.forward(g, x)));
  }

  void collect(ParamList<T>& out) {
    conv1.collect(out);
    conv2.collect(out);
    skip.collect(out);
  }
};

// spatial mean pool [C,H,W] -> [C,1] via a constant averaging matmul
template <typename T>
Var<T> global_pool(Graph<T>& g, Var<T> x) {
  const Shape& s = x.value().shape;
  if (s.size() != 3) throw ShapeError("global_pool: expected [C,H,W]");
  size_t hw = s[1] * s[2];
  Var<T> flat = reshape(x, {s[0], hw});
  Tensor<T> ones({hw, 1});
  ones.fill(static_cast<T>(1.0 / static_cast<double>(hw)));
  return matmul(flat, g.constant(ones));
}

// ---------------------------------------------------------------------------
// Lip encoder: VSR-frontend stand-in. One 3D convolution over (time, H, W)
// followed by four stride-2 residual 2D stages per frame and a global pool,
// giving one embedding column per video frame (time-preserving).
// ---------------------------------------------------------------------------
template <typename T>
struct LipEncoder {
  size_t out_dim = 0, c3d = 8;
  Param<T> w3d, b3d;  // [c3d, 1, 3, 3, 3]
  std::vector<ResStage2d<T>> stages;

  LipEncoder() = default;
  LipEncoder(const std::string& name, size_t d)
      : out_dim(d), w3d(name + ".w3d", {8, 1, 3, 3, 3}),
        b3d(name + ".b3d", {8}) {
    size_t chans[5] = {8, 12, 16, 24, d};
    for (size_t s = 0; s < 4; ++s)
      stages.emplace_back(name + ".s" + std::to_string(s), chans[s],
                          chans[s + 1]);
  }

  void init(uint64_t seed) {
    w3d.init_uniform(seed, 27);
    b3d.init_const(0.0);
    for (ResStage2d<T>& s : stages) s.init(seed);
  }

  // frames [C=1, Tv, H, W] -> [out_dim, Tv]
  Var<T> forward(Graph<T>& g, Var<T> frames) {
    const Shape& s = frames.value().shape;
    if (s.size() != 4 || s[0] != 1)
      throw ShapeError("lip encoder: frames " + shape_str(s));
    size_t tv = s[1], h = s[2], w = s[3];
    if (tv < 1) throw InputError("lip encoder: no frames");
    if (h < 4 || w < 4)
      throw InputError("lip encoder: frames below the 4x4 minimum receptive "
                       "field, got " + std::to_string(h) + "x" +
                       std::to_string(w));
    Var<T> wv = use(g, w3d);
    Var<T> bv = use(g, b3d);
    Var<T> zero_bias = g.constant(Tensor<T>({c3d}));
    std::vector<Var<T>> columns(tv);
    for (size_t t = 0; t < tv; ++t) {
      // 3D conv as a sum of per-offset 2D convs, zero padding in time
      Var<T> acc{};
      for (size_t dt = 0; dt < 3; ++dt) {
        int64_t src = static_cast<int64_t>(t) + static_cast<int64_t>(dt) - 1;
        if (src < 0 || src >= static_cast<int64_t>(tv)) continue;
        Var<T> frame = reshape(narrow(frames, 1, static_cast<size_t>(src), 1),
                               {size_t(1), h, w});
        Var<T> kt = reshape(narrow(wv, 2, dt, 1), {c3d, size_t(1), size_t(3),
                                                   size_t(3)});
        Var<T> part = conv2d(frame, kt, zero_bias, 1, 1, 1, 1);
        acc = acc.defined() ? add(acc, part) : part;
      }
      Var<T> x = add_chanvec(acc, bv);
      x = relu(x);
      for (ResStage2d<T>& st : stages) x = st.forward(g, x);
      columns[t] = global_pool(g, x);  // [out_dim, 1]
    }
    return concat<T>(1, columns);
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w3d);
    out.push_back(&b3d);
    for (ResStage2d<T>& s : stages) s.collect(out);
  }
};

// ---------------------------------------------------------------------------
// Per-frame 2D conv frontend shared by the face and expression stand-ins
// (separate instances, separate weights): three stride-2 residual stages and
// a global pool.
// ---------------------------------------------------------------------------
template <typename T>
struct ImageEncoder {
  size_t out_dim = 0;
  std::vector<ResStage2d<T>> stages;

  ImageEncoder() = default;
  ImageEncoder(const std::string& name, size_t d) : out_dim(d) {
    size_t chans[4] = {1, 8, 16, d};
    for (size_t s = 0; s < 3; ++s)
      stages.emplace_back(name + ".s" + std::to_string(s), chans[s],
                          chans[s + 1]);
  }

  void init(uint64_t seed) {
    for (ResStage2d<T>& s : stages) s.init(seed);
  }

  // single image [1,H,W] -> [out_dim, 1]
  Var<T> forward_image(Graph<T>& g, Var<T> image) {
    const Shape& s = image.value().shape;
    if (s.size() != 3 || s[0] != 1)
      throw ShapeError("image encoder: " + shape_str(s));
    Var<T> x = image;
    for (ResStage2d<T>& st : stages) x = st.forward(g, x);
    return global_pool(g, x);
  }

  // frames [1,Tv,H,W] -> [out_dim, Tv], one column per frame
  Var<T> forward_frames(Graph<T>& g, Var<T> frames) {
    const Shape& s = frames.value().shape;
    if (s.size() != 4 || s[0] != 1)
      throw ShapeError("image encoder: frames " + shape_str(s));
    size_t tv = s[1], h = s[2], w = s[3];
    std::vector<Var<T>> columns(tv);
    for (size_t t = 0; t < tv; ++t) {
      Var<T> frame =
          reshape(narrow(frames, 1, t, 1), {size_t(1), h, w});
      columns[t] = forward_image(g, frame);
    }
    return concat<T>(1, columns);
  }

  void collect(ParamList<T>& out) {
    for (ResStage2d<T>& s : stages) s.collect(out);
  }
};

// ---------------------------------------------------------------------------
// Voice encoder: enrollment and mixture spectrogram frames are flattened to
// (re, im) x bins features, linearly projected, and cross-attended with the
// enrollment as query and the mixture as key/value. The output has one
// column per enrollment frame.
// ---------------------------------------------------------------------------
template <typename T>
struct VoiceEncoder {
  size_t out_dim = 0, bins = 0;
  LinearLayer<T> in_proj;
  Mha<T> attn;

  VoiceEncoder() = default;
  VoiceEncoder(const std::string& name, size_t d, size_t bins_, size_t heads)
      : out_dim(d), bins(bins_), in_proj(name + ".proj", 2 * bins_, d),
        attn(name + ".xattn", d, d, heads) {}

  void init(uint64_t seed) {
    in_proj.init(seed);
    attn.init(seed);
  }

  // [T, 2*bins] feature rows from a spectrogram (no gradient path)
  Tensor<T> frame_features(const Spectrogram<T>& s) const {
    Tensor<T> f({s.frames, 2 * bins});
    for (size_t t = 0; t < s.frames; ++t)
      for (size_t k = 0; k < bins; ++k) {
        f.at2(t, k) = s.values.at3(0, t, k);
        f.at2(t, bins + k) = s.values.at3(1, t, k);
      }
    return f;
  }

  // -> [out_dim, T_enroll]
  Var<T> forward(Graph<T>& g, const Spectrogram<T>& enroll,
                 const Spectrogram<T>& mix) {
    if (enroll.frames < 1) throw InputError("voice encoder: empty enrollment");
    if (enroll.bins != bins || mix.bins != bins)
      throw ShapeError("voice encoder: bins mismatch");
    Var<T> q = in_proj.forward(g, g.constant(frame_features(enroll)));
    Var<T> kv = in_proj.forward(g, g.constant(frame_features(mix)));
    Var<T> out = attn.forward(g, q, kv, kv);  // [T_enroll, D]
    return transpose2(out);
  }

  void collect(ParamList<T>& out) {
    in_proj.collect(out);
    attn.collect(out);
  }
};

}  // namespace tsegrid

#endif  // TSEGRID_CUES_HPP_
