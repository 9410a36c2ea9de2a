// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_FFT_HPP_
#define TSEGRID_FFT_HPP_

#include <cmath>
#include <cstddef>
#include <vector>

#include "tsegrid/common.hpp"

namespace tsegrid {

// Iterative radix-2 Cooley-Tukey. Twiddles are evaluated in double no matter
// the working type. No scaling anywhere: inverse(forward(x)) == n * x.
template <typename T>
void fft_inplace(T* re, T* im, size_t n, bool inverse) {
  if (n == 0 || (n & (n - 1)) != 0)
    throw ConfigError("fft: length must be a power of two, got " +
                      std::to_string(n));
  // bit reversal
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = sign * 2.0 * 3.14159265358979323846 / static_cast<double>(len);
    double wr0 = std::cos(ang), wi0 = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double wr = 1.0, wi = 0.0;
      for (size_t j = 0; j < len / 2; ++j) {
        size_t a = i + j, b = i + j + len / 2;
        double ur = re[a], ui = im[a];
        double vr = re[b] * wr - im[b] * wi;
        double vi = re[b] * wi + im[b] * wr;
        re[a] = static_cast<T>(ur + vr);
        im[a] = static_cast<T>(ui + vi);
        re[b] = static_cast<T>(ur - vr);
        im[b] = static_cast<T>(ui - vi);
        double nwr = wr * wr0 - wi * wi0;
        wi = wr * wi0 + wi * wr0;
        wr = nwr;
      }
    }
  }
}

template <typename T>
void fft_inplace(std::vector<T>& re, std::vector<T>& im, bool inverse) {
  if (re.size() != im.size()) throw ShapeError("fft: re/im length mismatch");
  fft_inplace(re.data(), im.data(), re.size(), inverse);
}

}  // namespace tsegrid

#endif  // TSEGRID_FFT_HPP_
