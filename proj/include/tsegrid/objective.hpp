// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_OBJECTIVE_HPP_
#define TSEGRID_OBJECTIVE_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "tsegrid/dsp.hpp"
#include "tsegrid/graph.hpp"

namespace tsegrid {

struct MetricResult {
  double si_snr = 0.0;
  double stoi = 0.0;
};

inline constexpr double kSiSdrCapDb = 60.0;

// ---------------------------------------------------------------------------
// Scale-invariant SDR. Both signals are mean-centered first; the estimate is
// projected onto the reference (s_target = <e,r> r / ||r||^2) and the score
// is 10 log10(||s_target||^2 / ||e - s_target||^2), capped at +-60 dB.
// An all-zero reference is undefined; an all-zero estimate returns the
// -60 dB cap.
// ---------------------------------------------------------------------------
template <typename T>
double si_sdr(const std::vector<T>& est, const std::vector<T>& ref) {
  if (est.size() != ref.size() || est.empty())
    throw ShapeError("si_sdr: lengths " + std::to_string(est.size()) + " vs " +
                     std::to_string(ref.size()));
  size_t n = est.size();
  double me = 0.0, mr = 0.0;
  for (size_t i = 0; i < n; ++i) {
    me += static_cast<double>(est[i]);
    mr += static_cast<double>(ref[i]);
  }
  me /= static_cast<double>(n);
  mr /= static_cast<double>(n);
  double rr = 0.0, er = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double r = static_cast<double>(ref[i]) - mr;
    double e = static_cast<double>(est[i]) - me;
    rr += r * r;
    er += e * r;
  }
  if (rr == 0.0) throw InputError("si_sdr: all-zero reference");
  double a = er / rr;
  double st = 0.0, ee = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double r = static_cast<double>(ref[i]) - mr;
    double e = static_cast<double>(est[i]) - me;
    double s = a * r;
    st += s * s;
    double d = e - s;
    ee += d * d;
  }
  if (st == 0.0) return -kSiSdrCapDb;
  if (ee == 0.0) return kSiSdrCapDb;
  double db = 10.0 * std::log10(st / ee);
  return std::clamp(db, -kSiSdrCapDb, kSiSdrCapDb);
}

// ---------------------------------------------------------------------------
// Training loss: negative capped SI-SDR plus the mixture-consistency term
//   (1/N) || a_hat * est - ref ||_1,  a_hat = <est,ref> / ||est||^2.
// Single channel, so the per-channel sums collapse; the mixture argument is
// accepted for signature stability but does not enter (documented). Signals
// are mean-centered exactly like the metric.
// ---------------------------------------------------------------------------
template <typename T>
Var<T> loss_sisdr_se_mc(Graph<T>& g, Var<T> est, Var<T> ref,
                        Var<T> /*mix*/ = Var<T>{}) {
  const Shape& es = est.value().shape;
  const Shape& rs = ref.value().shape;
  if (es != rs || es.size() != 1 || es[0] == 0)
    throw ShapeError("loss: est " + shape_str(es) + " vs ref " +
                     shape_str(rs));
  size_t n = es[0];
  const double eps = 1e-12;
  Var<T> est_c = add_scalar(est, neg(mean_all(est)));
  Var<T> ref_c = add_scalar(ref, neg(mean_all(ref)));
  Var<T> rr = dot(ref_c, ref_c);
  Var<T> er = dot(est_c, ref_c);
  Var<T> ee = dot(est_c, est_c);
  Var<T> s_target = mul_scalar(ref_c, vdiv(er, add_const(rr, eps)));
  Var<T> resid = sub(est_c, s_target);
  Var<T> num = add_const(dot(s_target, s_target), eps);
  Var<T> den = add_const(dot(resid, resid), eps);
  Var<T> si_db = scale(vlog(vdiv(num, den)), 10.0 / std::log(10.0));
  Var<T> si_capped = clamp(si_db, -kSiSdrCapDb, kSiSdrCapDb);
  Var<T> alpha = vdiv(er, add_const(ee, eps));
  Var<T> mc = scale(sum_all(vabs(sub(mul_scalar(est_c, alpha), ref_c))),
                    1.0 / static_cast<double>(n));
  return add(neg(si_capped), mc);
}

// non-graph convenience for reporting
template <typename T>
double loss_sisdr_se_mc_value(const std::vector<T>& est,
                              const std::vector<T>& ref) {
  Graph<T> g;
  Var<T> e = g.constant(Tensor<T>({est.size()}, est));
  Var<T> r = g.constant(Tensor<T>({ref.size()}, ref));
  return static_cast<double>(loss_sisdr_se_mc(g, e, r).value()[0]);
}

// ---------------------------------------------------------------------------
// STOI. 16 kHz input only (no resampling): 512-point Hann frames at 50%
// overlap, silent-frame removal at 40 dB below the loudest reference frame,
// 15 one-third-octave bands starting at 150 Hz, 30-frame analysis segments,
// per-segment envelope normalization with clipping at -15 dB SDR, averaged
// correlation over bands and segments, clamped to [0,1].
// ---------------------------------------------------------------------------

namespace stoidet {

inline constexpr size_t kFrameLen = 512;
inline constexpr size_t kFrameHop = 256;
inline constexpr size_t kNumBands = 15;
inline constexpr double kBandBase = 150.0;
inline constexpr size_t kSegFrames = 30;
inline constexpr double kVadRangeDb = 40.0;
inline constexpr double kClipBeta = -15.0;  // dB

template <typename T>
std::vector<std::vector<double>> frame_signal(const std::vector<T>& x,
                                              const std::vector<double>& w) {
  size_t m = (x.size() - kFrameLen) / kFrameHop + 1;
  std::vector<std::vector<double>> frames(m, std::vector<double>(kFrameLen));
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < kFrameLen; ++j)
      frames[i][j] = w[j] * static_cast<double>(x[i * kFrameHop + j]);
  return frames;
}

inline std::vector<std::vector<double>> band_envelopes(
    const std::vector<std::vector<double>>& frames, int fs) {
  // one-third octave band edges over the 512-point one-sided spectrum
  size_t nbins = kFrameLen / 2 + 1;
  double bin_hz = static_cast<double>(fs) / static_cast<double>(kFrameLen);
  std::vector<std::pair<size_t, size_t>> bands(kNumBands);
  for (size_t j = 0; j < kNumBands; ++j) {
    double fc = kBandBase * std::pow(2.0, static_cast<double>(j) / 3.0);
    double lo = fc / std::pow(2.0, 1.0 / 6.0);
    double hi = fc * std::pow(2.0, 1.0 / 6.0);
    size_t klo = static_cast<size_t>(std::ceil(lo / bin_hz));
    size_t khi = std::min(nbins, static_cast<size_t>(std::ceil(hi / bin_hz)));
    bands[j] = {klo, khi};
  }
  std::vector<std::vector<double>> env(
      kNumBands, std::vector<double>(frames.size(), 0.0));
  std::vector<double> re(kFrameLen), im(kFrameLen);
  for (size_t m = 0; m < frames.size(); ++m) {
    std::copy(frames[m].begin(), frames[m].end(), re.begin());
    std::fill(im.begin(), im.end(), 0.0);
    fft_inplace(re.data(), im.data(), kFrameLen, false);
    for (size_t j = 0; j < kNumBands; ++j) {
      double acc = 0.0;
      for (size_t k = bands[j].first; k < bands[j].second; ++k)
        acc += re[k] * re[k] + im[k] * im[k];
      env[j][m] = std::sqrt(acc);
    }
  }
  return env;
}

}  // namespace stoidet

template <typename T>
double stoi(const std::vector<T>& est, const std::vector<T>& ref, int fs) {
  if (fs != 16000)
    throw ConfigError("stoi: unsupported sample rate " + std::to_string(fs));
  if (est.size() != ref.size())
    throw ShapeError("stoi: length mismatch");
  using namespace stoidet;
  if (ref.size() < kFrameLen + (kSegFrames - 1) * kFrameHop)
    throw InputError("stoi: input shorter than one analysis segment");

  std::vector<double> w(kFrameLen);
  for (size_t n = 0; n < kFrameLen; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 *
                                static_cast<double>(n) / kFrameLen);
  auto xf = frame_signal(ref, w);
  auto yf = frame_signal(est, w);

  // energy-based VAD on the clean reference; identical frames kept in both
  double max_e = 0.0;
  std::vector<double> energy(xf.size());
  for (size_t m = 0; m < xf.size(); ++m) {
    double e = 0.0;
    for (double v : xf[m]) e += v * v;
    energy[m] = e;
    max_e = std::max(max_e, e);
  }
  if (max_e == 0.0) throw InputError("stoi: silent reference");
  double thresh = max_e * std::pow(10.0, -kVadRangeDb / 10.0);
  std::vector<std::vector<double>> xk, yk;
  for (size_t m = 0; m < xf.size(); ++m) {
    if (energy[m] > thresh) {
      xk.push_back(std::move(xf[m]));
      yk.push_back(std::move(yf[m]));
    }
  }
  if (xk.size() < kSegFrames)
    throw InputError("stoi: too few active frames (" +
                     std::to_string(xk.size()) + ")");

  auto xe = band_envelopes(xk, fs);
  auto ye = band_envelopes(yk, fs);
  size_t m_total = xk.size();
  double clip_gain = 1.0 + std::pow(10.0, -kClipBeta / 20.0);
  double acc = 0.0;
  size_t count = 0;
  for (size_t j = 0; j < kNumBands; ++j) {
    for (size_t m = kSegFrames; m <= m_total; ++m) {
      const double* xs = &xe[j][m - kSegFrames];
      const double* ys = &ye[j][m - kSegFrames];
      double nx = 0.0, ny = 0.0;
      for (size_t i = 0; i < kSegFrames; ++i) {
        nx += xs[i] * xs[i];
        ny += ys[i] * ys[i];
      }
      double alpha = (ny > 0.0) ? std::sqrt(nx / ny) : 0.0;
      double yn[kSegFrames];
      for (size_t i = 0; i < kSegFrames; ++i)
        yn[i] = std::min(alpha * ys[i], clip_gain * xs[i]);
      double mx = 0.0, my = 0.0;
      for (size_t i = 0; i < kSegFrames; ++i) {
        mx += xs[i];
        my += yn[i];
      }
      mx /= kSegFrames;
      my /= kSegFrames;
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (size_t i = 0; i < kSegFrames; ++i) {
        double dx = xs[i] - mx, dy = yn[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
      }
      double d = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
      acc += d;
      ++count;
    }
  }
  double score = count ? acc / static_cast<double>(count) : 0.0;
  return std::clamp(score, 0.0, 1.0);
}

// Bundles the evaluation metrics against a scene's clean target. SI-SDR is
// reported under the SISNR heading, matching the table layout. A zero
// estimate yields {-60 dB, 0.0}.
template <typename T, typename SceneT>
MetricResult evaluate_scene(const std::vector<T>& est, const SceneT& scene) {
  MetricResult r;
  r.si_snr = si_sdr(est, scene.target);
  r.stoi = stoi(est, scene.target, scene.sample_rate);
  return r;
}

}  // namespace tsegrid

#endif  // TSEGRID_OBJECTIVE_HPP_
