// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_CHECKPOINT_HPP_
#define TSEGRID_CHECKPOINT_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tsegrid/params.hpp"
#include "tsegrid/tensor.hpp"

namespace tsegrid {

// Checkpoint file, all integers and floats little-endian:
//
//   bytes 0..3   magic "TSGC"
//   u32          format version (1)
//   u64          rng seed
//   u32          entry count
//   per entry:
//     u16        name length, followed by that many bytes (no terminator)
//     u8         ndim
//     u32[ndim]  extents
//     f32[numel] values
//
// Parameter values are stored as 32-bit floats regardless of the in-memory
// scalar type, so checkpoints interoperate between the float training build
// and the double test build.

namespace ckptdet {

static_assert(sizeof(float) == 4, "require 32-bit float");

inline void write_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

inline uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline float read_f32(std::istream& is) {
  uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace ckptdet

inline constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const ParamList<T>& params,
                     uint64_t seed) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write("TSGC", 4);
  ckptdet::write_u32(os, kCheckpointVersion);
  ckptdet::write_u64(os, seed);
  ckptdet::write_u32(os, static_cast<uint32_t>(params.size()));
  for (const Param<T>* p : params) {
    if (p->name.size() > 0xffff)
      throw IoError("parameter name too long: " + p->name);
    ckptdet::write_u16(os, static_cast<uint16_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    os.put(static_cast<char>(p->value.rank()));
    for (size_t d : p->value.shape)
      ckptdet::write_u32(os, static_cast<uint32_t>(d));
    for (const T& v : p->value.data)
      ckptdet::write_f32(os, static_cast<float>(v));
  }
  if (!os) throw IoError("short write: " + path);
}

struct CheckpointEntry {
  Shape shape;
  std::vector<float> data;
};

struct RawCheckpoint {
  uint64_t seed = 0;
  std::vector<std::string> order;
  std::map<std::string, CheckpointEntry> entries;
};

inline RawCheckpoint load_checkpoint_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TSGC", 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint32_t version = ckptdet::read_u32(is);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  RawCheckpoint out;
  out.seed = ckptdet::read_u64(is);
  uint32_t count = ckptdet::read_u32(is);
  for (uint32_t e = 0; e < count; ++e) {
    uint16_t len = ckptdet::read_u16(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    int ndim = is.get();
    CheckpointEntry entry;
    size_t numel = 1;
    for (int d = 0; d < ndim; ++d) {
      entry.shape.push_back(ckptdet::read_u32(is));
      numel *= entry.shape.back();
    }
    entry.data.resize(numel);
    for (size_t i = 0; i < numel; ++i) entry.data[i] = ckptdet::read_f32(is);
    if (!is) throw IoError("truncated checkpoint: " + path);
    out.order.push_back(name);
    out.entries.emplace(std::move(name), std::move(entry));
  }
  return out;
}

// Loads values into an existing parameter set; names and shapes must match
// exactly, otherwise the checkpoint belongs to a different model config.
template <typename T>
uint64_t load_checkpoint(const std::string& path, const ParamList<T>& params) {
  RawCheckpoint raw = load_checkpoint_raw(path);
  if (raw.entries.size() != params.size())
    throw ConfigError("checkpoint/model mismatch: " +
                      std::to_string(raw.entries.size()) + " stored vs " +
                      std::to_string(params.size()) + " model parameters");
  for (Param<T>* p : params) {
    auto it = raw.entries.find(p->name);
    if (it == raw.entries.end())
      throw ConfigError("checkpoint/model mismatch: missing parameter " +
                        p->name);
    if (it->second.shape != p->value.shape)
      throw ConfigError("checkpoint/model mismatch: " + p->name + " is " +
                        shape_str(it->second.shape) + " stored vs " +
                        shape_str(p->value.shape));
    for (size_t i = 0; i < p->value.size(); ++i)
      p->value[i] = static_cast<T>(it->second.data[i]);
  }
  return raw.seed;
}

}  // namespace tsegrid

#endif  // TSEGRID_CHECKPOINT_HPP_
