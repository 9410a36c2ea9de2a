// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_WAV_HPP_
#define TSEGRID_WAV_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tsegrid/common.hpp"

namespace tsegrid {

// Mono 16-bit PCM RIFF/WAVE, the only format the dataset cache uses.

namespace wavdet {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

inline uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace wavdet

template <typename T>
void write_wav(const std::string& path, const std::vector<T>& samples,
               int sample_rate) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write wav: " + path);
  uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  wavdet::put_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wavdet::put_u32(os, 16);
  wavdet::put_u16(os, 1);  // PCM
  wavdet::put_u16(os, 1);  // mono
  wavdet::put_u32(os, static_cast<uint32_t>(sample_rate));
  wavdet::put_u32(os, static_cast<uint32_t>(sample_rate * 2));
  wavdet::put_u16(os, 2);
  wavdet::put_u16(os, 16);
  os.write("data", 4);
  wavdet::put_u32(os, data_bytes);
  for (const T& v : samples) {
    double x = static_cast<double>(v);
    if (x > 1.0) x = 1.0;
    if (x < -1.0) x = -1.0;
    int32_t q = static_cast<int32_t>(std::lrint(x * 32767.0));
    wavdet::put_u16(os, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  if (!os) throw IoError("short write: " + path);
}

template <typename T>
std::vector<T> read_wav(const std::string& path, int* sample_rate_out = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open wav: " + path);
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0)
    throw IoError("not a RIFF file: " + path);
  wavdet::get_u32(is);
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0)
    throw IoError("not a WAVE file: " + path);
  int sample_rate = 0;
  uint16_t channels = 0, bits = 0;
  std::vector<T> samples;
  bool have_fmt = false, have_data = false;
  while (is && !(have_fmt && have_data)) {
    is.read(tag, 4);
    if (!is) break;
    uint32_t size = wavdet::get_u32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      uint16_t fmt = wavdet::get_u16(is);
      channels = wavdet::get_u16(is);
      sample_rate = static_cast<int>(wavdet::get_u32(is));
      wavdet::get_u32(is);
      wavdet::get_u16(is);
      bits = wavdet::get_u16(is);
      if (size > 16) is.ignore(size - 16);
      if (fmt != 1) throw IoError("wav: only PCM supported: " + path);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw IoError("wav: data before fmt: " + path);
      if (channels != 1 || bits != 16)
        throw IoError("wav: expected mono 16-bit: " + path);
      size_t n = size / 2;
      samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        int16_t q = static_cast<int16_t>(wavdet::get_u16(is));
        samples[i] = static_cast<T>(q / 32767.0);
      }
      have_data = true;
    } else {
      is.ignore(size + (size & 1));
    }
  }
  if (!have_data) throw IoError("wav: no data chunk: " + path);
  if (sample_rate_out) *sample_rate_out = sample_rate;
  return samples;
}

}  // namespace tsegrid

#endif  // TSEGRID_WAV_HPP_
