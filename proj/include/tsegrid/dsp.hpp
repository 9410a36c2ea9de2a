// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_DSP_HPP_
#define TSEGRID_DSP_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "tsegrid/fft.hpp"
#include "tsegrid/graph.hpp"
#include "tsegrid/tensor.hpp"

namespace tsegrid {

// STFT analysis / synthesis with a periodic Hann window, 50% overlap in the
// default 128/64 preset (65 one-sided bins). The input is zero-extended to a
// hop multiple and reflect-padded by win/2 on both sides; orig_len remembers
// how much to crop back after synthesis. Complex values are stored as two
// real channels [2, frames, bins] (0 = real, 1 = imag).

template <typename T>
struct Spectrogram {
  size_t bins = 0;
  size_t frames = 0;
  Tensor<T> values;  // [2, frames, bins]
  int sample_rate = 16000;
  size_t win = 128;
  size_t hop = 64;
  size_t orig_len = 0;
};

namespace dspdet {

inline std::vector<double> periodic_hann(size_t win) {
  std::vector<double> w(win);
  for (size_t n = 0; n < win; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 *
                                static_cast<double>(n) /
                                static_cast<double>(win));
  return w;
}

// zero-extend to a hop multiple, then reflect-pad win/2 on both sides
template <typename T>
std::vector<T> pad_signal(const std::vector<T>& x, size_t win, size_t hop) {
  size_t n = x.size();
  size_t ext = ((n + hop - 1) / hop) * hop;
  size_t half = win / 2;
  std::vector<T> p(ext + 2 * half, T(0));
  for (size_t i = 0; i < n; ++i) p[half + i] = x[i];
  for (size_t i = 0; i < half; ++i) {
    // reflect about the first/last sample of the extended signal
    p[half - 1 - i] = p[half + 1 + i];
    p[half + ext + i] = p[half + ext - 2 - i];
  }
  return p;
}

// squared-window overlap-add denominator over the padded timeline
inline std::vector<double> ola_denominator(size_t frames, size_t win,
                                           size_t hop) {
  std::vector<double> w = periodic_hann(win);
  std::vector<double> den((frames - 1) * hop + win, 0.0);
  for (size_t m = 0; m < frames; ++m)
    for (size_t j = 0; j < win; ++j) den[m * hop + j] += w[j] * w[j];
  return den;
}

// synthesis shared by the plain and the autodiff path
template <typename T>
std::vector<T> istft_core(const T* values, size_t frames, size_t bins,
                          size_t win, size_t hop, size_t orig_len) {
  size_t half = win / 2;
  std::vector<double> w = periodic_hann(win);
  std::vector<double> den = ola_denominator(frames, win, hop);
  std::vector<double> acc(den.size(), 0.0);
  std::vector<double> re(win), im(win);
  const T* re_ch = values;
  const T* im_ch = values + frames * bins;
  for (size_t m = 0; m < frames; ++m) {
    for (size_t k = 0; k < bins; ++k) {
      re[k] = static_cast<double>(re_ch[m * bins + k]);
      im[k] = static_cast<double>(im_ch[m * bins + k]);
    }
    for (size_t k = bins; k < win; ++k) {
      re[k] = re[win - k];
      im[k] = -im[win - k];
    }
    fft_inplace(re.data(), im.data(), win, /*inverse=*/true);
    double inv_n = 1.0 / static_cast<double>(win);
    for (size_t j = 0; j < win; ++j)
      acc[m * hop + j] += w[j] * re[j] * inv_n;
  }
  if (orig_len + half > acc.size())
    throw ShapeError("istft: orig_len " + std::to_string(orig_len) +
                     " exceeds synthesis span");
  std::vector<T> out(orig_len);
  for (size_t i = 0; i < orig_len; ++i)
    out[i] = static_cast<T>(acc[half + i] / den[half + i]);
  return out;
}

}  // namespace dspdet

template <typename T>
Spectrogram<T> stft(const std::vector<T>& x, size_t win = 128, size_t hop = 64,
                    int sample_rate = 16000) {
  if (x.size() < win)
    throw InputError("stft: input length " + std::to_string(x.size()) +
                     " shorter than window " + std::to_string(win));
  for (const T& v : x)
    if (!std::isfinite(static_cast<double>(v)))
      throw InputError("stft: non-finite sample");
  std::vector<T> padded = dspdet::pad_signal(x, win, hop);
  std::vector<double> w = dspdet::periodic_hann(win);
  size_t frames = 1 + (padded.size() - win) / hop;
  size_t bins = win / 2 + 1;
  Spectrogram<T> s;
  s.bins = bins;
  s.frames = frames;
  s.sample_rate = sample_rate;
  s.win = win;
  s.hop = hop;
  s.orig_len = x.size();
  s.values = Tensor<T>({2, frames, bins});
  std::vector<double> re(win), im(win);
  for (size_t m = 0; m < frames; ++m) {
    for (size_t j = 0; j < win; ++j) {
      re[j] = w[j] * static_cast<double>(padded[m * hop + j]);
      im[j] = 0.0;
    }
    fft_inplace(re.data(), im.data(), win, /*inverse=*/false);
    for (size_t k = 0; k < bins; ++k) {
      s.values.at3(0, m, k) = static_cast<T>(re[k]);
      s.values.at3(1, m, k) = static_cast<T>(im[k]);
    }
  }
  return s;
}

template <typename T>
std::vector<T> istft(const Spectrogram<T>& s) {
  if (s.bins != s.win / 2 + 1)
    throw ShapeError("istft: bins " + std::to_string(s.bins) +
                     " inconsistent with win " + std::to_string(s.win));
  if (s.values.shape != Shape{2, s.frames, s.bins})
    throw ShapeError("istft: values " + shape_str(s.values.shape));
  return dspdet::istft_core(s.values.ptr(), s.frames, s.bins, s.win, s.hop,
                            s.orig_len);
}

// Differentiable synthesis: spec [2, frames, bins] -> waveform [orig_len].
// The map is linear; backward applies its exact adjoint.
template <typename T>
Var<T> istft_op(Var<T> spec, size_t win, size_t hop, size_t orig_len) {
  Graph<T>& g = *spec.graph;
  const Tensor<T>& sv = spec.value();
  if (sv.rank() != 3 || sv.shape[0] != 2 || sv.shape[2] != win / 2 + 1)
    throw ShapeError("istft_op: spec " + shape_str(sv.shape) +
                     " for win " + std::to_string(win));
  size_t frames = sv.shape[1], bins = sv.shape[2];
  std::vector<T> wave =
      dspdet::istft_core(sv.ptr(), frames, bins, win, hop, orig_len);
  Tensor<T> out({orig_len});
  out.data = std::move(wave);
  Var<T> r = g.leaf(std::move(out), g.node(spec.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t is = spec.id, ir = r.id;
    g.node(r.id).backprop = [&g, is, ir, frames, bins, win, hop, orig_len]() {
      const Tensor<T>& dy = g.node(ir).grad;
      Tensor<T>& dspec = g.grad_buf(is);
      size_t half = win / 2;
      std::vector<double> w = dspdet::periodic_hann(win);
      std::vector<double> den = dspdet::ola_denominator(frames, win, hop);
      std::vector<double> gpad(den.size(), 0.0);
      for (size_t i = 0; i < orig_len; ++i)
        gpad[half + i] = static_cast<double>(dy[i]) / den[half + i];
      std::vector<double> re(win), im(win);
      double inv_n = 1.0 / static_cast<double>(win);
      T* dre = dspec.ptr();
      T* dim = dspec.ptr() + frames * bins;
      for (size_t m = 0; m < frames; ++m) {
        for (size_t j = 0; j < win; ++j) {
          re[j] = w[j] * gpad[m * hop + j] * inv_n;
          im[j] = 0.0;
        }
        fft_inplace(re.data(), im.data(), win, /*inverse=*/false);
        for (size_t k = 0; k < bins; ++k) {
          double c = (k == 0 || k == win / 2) ? 1.0 : 2.0;
          dre[m * bins + k] += static_cast<T>(c * re[k]);
          dim[m * bins + k] += static_cast<T>(c * im[k]);
        }
      }
    };
  }
  return r;
}

// raw dump: frames x bins (re, im) float pairs, frame-major
template <typename T>
void dump_spectrogram(const std::string& path, const Spectrogram<T>& s) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write spectrogram dump: " + path);
  for (size_t m = 0; m < s.frames; ++m)
    for (size_t k = 0; k < s.bins; ++k) {
      float pair[2] = {static_cast<float>(s.values.at3(0, m, k)),
                       static_cast<float>(s.values.at3(1, m, k))};
      os.write(reinterpret_cast<const char*>(pair), sizeof(pair));
    }
}

}  // namespace tsegrid

#endif  // TSEGRID_DSP_HPP_
