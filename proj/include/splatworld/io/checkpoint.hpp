#pragma once

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "splatworld/nn/optimizer.hpp"

namespace splatworld::io {

struct CorruptHeaderError : IoError {
  using IoError::IoError;
};
struct TruncatedFileError : IoError {
  using IoError::IoError;
};
struct VersionMismatchError : IoError {
  using IoError::IoError;
};
struct ChecksumError : IoError {
  using IoError::IoError;
};

inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'S', 'P', 'W', 'M'};

// Self-describing training snapshot: every parameter tensor by name (float32
// little-endian payloads), optimizer moments, the config that produced it,
// and the data RNG state. CRC-32 trailer over everything else.
struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  uint64_t iteration = 0;
  std::string config_json;
  std::string rng_state;
  OptimizerState<float> optimizer;
  std::map<std::string, VecX<float>> tensors;
};

namespace detail {

template <class T> void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_str(std::string& buf, const std::string& s) {
  put<uint64_t>(buf, s.size());
  buf.append(s);
}

inline void put_vec(std::string& buf, const VecX<float>& v) {
  put<uint64_t>(buf, uint64_t(v.size()));
  buf.append(reinterpret_cast<const char*>(v.data()), sizeof(float) * size_t(v.size()));
}

struct Cursor {
  const std::string& buf;
  size_t pos = 0;

  template <class T> T get() {
    if (pos + sizeof(T) > buf.size())
      throw TruncatedFileError("checkpoint: truncated payload");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_str() {
    const uint64_t n = get<uint64_t>();
    if (pos + n > buf.size()) throw TruncatedFileError("checkpoint: truncated payload");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  VecX<float> get_vec() {
    const uint64_t n = get<uint64_t>();
    if (pos + n * sizeof(float) > buf.size())
      throw TruncatedFileError("checkpoint: truncated payload");
    VecX<float> v = VecX<float>::Zero(Eigen::Index(n));
    std::memcpy(v.data(), buf.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
    return v;
  }
};

}  // namespace detail

inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  std::string buf;
  buf.append(kCheckpointMagic, 4);
  detail::put<uint32_t>(buf, cp.version);
  detail::put<uint64_t>(buf, cp.iteration);
  detail::put_str(buf, cp.config_json);
  detail::put_str(buf, cp.rng_state);

  detail::put<uint8_t>(buf, uint8_t(cp.optimizer.algorithm));
  detail::put<uint64_t>(buf, uint64_t(cp.optimizer.step_count));
  for (float v : {cp.optimizer.learning_rate, cp.optimizer.beta1, cp.optimizer.beta2,
                  cp.optimizer.weight_decay, cp.optimizer.epsilon, cp.optimizer.trust_clamp})
    detail::put<float>(buf, v);
  detail::put<uint64_t>(buf, cp.optimizer.moments.size());
  for (const auto& [name, mom] : cp.optimizer.moments) {
    detail::put_str(buf, name);
    detail::put_vec(buf, mom.m);
    detail::put_vec(buf, mom.v);
  }

  detail::put<uint64_t>(buf, cp.tensors.size());
  for (const auto& [name, t] : cp.tensors) {
    detail::put_str(buf, name);
    detail::put_vec(buf, t);
  }

  const uint32_t crc =
      uint32_t(crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size())));
  detail::put<uint32_t>(buf, crc);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open " + path);
  f.write(buf.data(), std::streamsize(buf.size()));
  if (!f) throw IoError("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 + sizeof(uint32_t))
    throw TruncatedFileError("load_checkpoint: file shorter than the fixed header");
  if (std::memcmp(buf.data(), kCheckpointMagic, 4) != 0)
    throw CorruptHeaderError("load_checkpoint: bad magic bytes");

  const uint32_t stored_crc =
      *reinterpret_cast<const uint32_t*>(buf.data() + buf.size() - sizeof(uint32_t));
  buf.resize(buf.size() - sizeof(uint32_t));
  const uint32_t crc =
      uint32_t(crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size())));

  detail::Cursor cur{buf, 4};
  Checkpoint cp;
  cp.version = cur.get<uint32_t>();
  if (cp.version != kCheckpointVersion)
    throw VersionMismatchError("load_checkpoint: file version " + std::to_string(cp.version) +
                               ", reader version " + std::to_string(kCheckpointVersion));
  if (crc != stored_crc)
    throw ChecksumError("load_checkpoint: CRC-32 mismatch, file is corrupted");
  cp.iteration = cur.get<uint64_t>();
  cp.config_json = cur.get_str();
  cp.rng_state = cur.get_str();

  cp.optimizer.algorithm = OptAlgo(cur.get<uint8_t>());
  cp.optimizer.step_count = long(cur.get<uint64_t>());
  cp.optimizer.learning_rate = cur.get<float>();
  cp.optimizer.beta1 = cur.get<float>();
  cp.optimizer.beta2 = cur.get<float>();
  cp.optimizer.weight_decay = cur.get<float>();
  cp.optimizer.epsilon = cur.get<float>();
  cp.optimizer.trust_clamp = cur.get<float>();
  const uint64_t nmom = cur.get<uint64_t>();
  for (uint64_t i = 0; i < nmom; ++i) {
    std::string name = cur.get_str();
    auto& mom = cp.optimizer.moments[name];
    mom.m = cur.get_vec();
    mom.v = cur.get_vec();
  }

  const uint64_t ntens = cur.get<uint64_t>();
  for (uint64_t i = 0; i < ntens; ++i) {
    std::string name = cur.get_str();
    cp.tensors[name] = cur.get_vec();
  }
  if (cur.pos != buf.size())
    throw TruncatedFileError("load_checkpoint: trailing bytes after the last tensor");
  return cp;
}

}  // namespace splatworld::io
