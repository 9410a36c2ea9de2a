// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>

#include "tsegrid/dsp.hpp"
#include "tsegrid/grad_check.hpp"
#include "tsegrid/random.hpp"
#include "tsegrid/wav.hpp"

using namespace tsegrid;

namespace {

std::vector<double> random_signal(size_t n, uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = amp * rng.normal();
  return x;
}

double max_abs(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("fft inverse undoes forward up to n scaling", "[fft]") {
  std::vector<double> re = random_signal(128, 3);
  std::vector<double> im = random_signal(128, 4);
  std::vector<double> re0 = re, im0 = im;
  fft_inplace(re, im, false);
  fft_inplace(re, im, true);
  for (size_t i = 0; i < 128; ++i) {
    CHECK(re[i] / 128.0 == Catch::Approx(re0[i]).margin(1e-12));
    CHECK(im[i] / 128.0 == Catch::Approx(im0[i]).margin(1e-12));
  }
  std::vector<double> bad(12);
  CHECK_THROWS_AS(fft_inplace(bad.data(), bad.data(), 12, false), ConfigError);
}

TEST_CASE("stft yields 65 bins at win 128", "[dsp]") {
  std::vector<double> x = random_signal(16000, 7);
  Spectrogram<double> s = stft(x);
  CHECK(s.bins == 65);
  CHECK(s.win == 128);
  CHECK(s.hop == 64);
  // frames == 1 + (padded - win)/hop with padded = hop-extended + win
  size_t ext = ((x.size() + 63) / 64) * 64;
  CHECK(s.frames == 1 + (ext + 128 - 128) / 64);
  CHECK(s.values.shape == Shape{2, s.frames, 65});
}

TEST_CASE("stft of silence is identically zero", "[dsp]") {
  std::vector<double> x(4096, 0.0);
  Spectrogram<double> s = stft(x);
  for (double v : s.values.data) CHECK(v == 0.0);
}

TEST_CASE("stft rejects short and non-finite input", "[dsp]") {
  std::vector<double> x(100, 0.1);
  CHECK_THROWS_AS(stft(x), InputError);
  std::vector<double> y(512, 0.1);
  y[5] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(stft(y), InputError);
}

TEST_CASE("2 kHz sine concentrates energy in bins 15-17", "[dsp]") {
  size_t n = 16000;
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i)
    x[i] = 0.5 * std::sin(2.0 * 3.14159265358979323846 * 2000.0 * i / 16000.0);
  Spectrogram<double> s = stft(x);
  // skip edge frames that see the reflect padding
  for (size_t m = 2; m + 2 < s.frames; m += 17) {
    double total = 0.0, window = 0.0;
    for (size_t k = 0; k < s.bins; ++k) {
      double re = s.values.at3(0, m, k), im = s.values.at3(1, m, k);
      double e = re * re + im * im;
      total += e;
      if (k >= 15 && k <= 17) window += e;
    }
    REQUIRE(total > 0.0);
    CHECK(window / total >= 0.95);
  }
}

TEST_CASE("istft reconstructs interior samples", "[dsp]") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    std::vector<double> x = random_signal(16000, seed);  // 1 s
    Spectrogram<double> s = stft(x);
    std::vector<double> y = istft(s);
    REQUIRE(y.size() == x.size());
    double worst = 0.0;
    for (size_t i = 64; i + 64 < x.size(); ++i)
      worst = std::max(worst, std::abs(y[i] - x[i]));
    CHECK(worst < 1e-6 * max_abs(x));
  }
}

TEST_CASE("istft of a zero spectrogram is zero", "[dsp]") {
  std::vector<double> x = random_signal(2048, 5);
  Spectrogram<double> s = stft(x);
  s.values.fill(0.0);
  std::vector<double> y = istft(s);
  for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("istft validates bins against the window", "[dsp]") {
  std::vector<double> x = random_signal(2048, 6);
  Spectrogram<double> s = stft(x);
  s.bins = 64;
  CHECK_THROWS_AS(istft(s), ShapeError);
}

TEST_CASE("stft/istft are linear", "[dsp]") {
  std::vector<double> x = random_signal(4096, 11);
  std::vector<double> y = random_signal(4096, 12);
  std::vector<double> z(4096);
  for (size_t i = 0; i < z.size(); ++i) z[i] = 2.5 * x[i] - 0.7 * y[i];
  Spectrogram<double> sx = stft(x), sy = stft(y), sz = stft(z);
  for (size_t i = 0; i < sz.values.size(); ++i)
    CHECK(sz.values[i] ==
          Catch::Approx(2.5 * sx.values[i] - 0.7 * sy.values[i])
              .margin(1e-9));
}

TEST_CASE("Parseval: spectrogram energy equals windowed-frame energy",
          "[dsp]") {
  std::vector<double> x = random_signal(4096, 13);
  Spectrogram<double> s = stft(x);
  // frame the same padded signal the stft saw
  std::vector<double> padded = dspdet::pad_signal(x, s.win, s.hop);
  std::vector<double> w = dspdet::periodic_hann(s.win);
  double time_energy = 0.0;
  for (size_t m = 0; m < s.frames; ++m)
    for (size_t j = 0; j < s.win; ++j) {
      double v = w[j] * padded[m * s.hop + j];
      time_energy += v * v;
    }
  double spec_energy = 0.0;
  for (size_t m = 0; m < s.frames; ++m)
    for (size_t k = 0; k < s.bins; ++k) {
      double re = s.values.at3(0, m, k), im = s.values.at3(1, m, k);
      double c = (k == 0 || k == s.win / 2) ? 1.0 : 2.0;
      spec_energy += c * (re * re + im * im);
    }
  spec_energy /= static_cast<double>(s.win);
  CHECK(spec_energy ==
        Catch::Approx(time_energy).epsilon(1e-9));
}

TEST_CASE("istft_op matches istft and passes the adjoint gradient check",
          "[dsp]") {
  std::vector<double> x = random_signal(768, 17);
  Spectrogram<double> s = stft(x);
  Graph<double> g;
  Var<double> wave = istft_op(g.constant(s.values), s.win, s.hop, s.orig_len);
  std::vector<double> direct = istft(s);
  REQUIRE(wave.value().size() == direct.size());
  for (size_t i = 0; i < direct.size(); ++i)
    CHECK(wave.value()[i] == Catch::Approx(direct[i]).margin(1e-12));

  // small case for finite differences
  std::vector<double> xs = random_signal(192, 18);
  Spectrogram<double> ss = stft(xs);
  Tensor<double> wy({ss.orig_len});
  Rng rng(19);
  for (double& v : wy.data) v = rng.normal();
  double err = grad_check<double>(
      [&](Graph<double>& g2, Var<double> v) {
        return dot(istft_op(v, ss.win, ss.hop, ss.orig_len), g2.constant(wy));
      },
      ss.values);
  CHECK(err < 1e-6);
}

TEST_CASE("wav round trip preserves samples to quantization", "[wav]") {
  namespace fs = std::filesystem;
  std::string path = fs::temp_directory_path() / "tsegrid_test.wav";
  std::vector<double> x = random_signal(3000, 23, 0.4);
  double peak = max_abs(x);
  for (double& v : x) v *= 0.9 / peak;
  write_wav(path, x, 16000);
  int rate = 0;
  std::vector<double> y = read_wav<double>(path, &rate);
  CHECK(rate == 16000);
  REQUIRE(y.size() == x.size());
  for (size_t i = 0; i < x.size(); ++i)
    CHECK(std::abs(y[i] - x[i]) < 1.0 / 32767.0);
  // a second write/read round trip is lossless
  write_wav(path, y, 16000);
  std::vector<double> z = read_wav<double>(path);
  CHECK(z == y);
  fs::remove(path);
}

TEST_CASE("spectrogram dump writes raw float pairs", "[dsp]") {
  namespace fs = std::filesystem;
  std::string path = fs::temp_directory_path() / "tsegrid_spec.bin";
  std::vector<double> x = random_signal(512, 29);
  Spectrogram<double> s = stft(x);
  dump_spectrogram(path, s);
  CHECK(fs::file_size(path) == s.frames * s.bins * 2 * sizeof(float));
  fs::remove(path);
}
