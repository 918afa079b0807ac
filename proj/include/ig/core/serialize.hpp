#pragma once

// IGPS parameter container. Layout, all little-endian:
//   magic "IGPS" | u32 version | u32 entry count
//   per entry: u16 name length | name bytes | u8 rank | u32 extents[rank]
//              | f32 values (row-major)
// Gradients and optimizer moments are not stored; loading yields zeroed
// moments, which matches a fresh optimizer.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ig/core/params.hpp"

namespace ig {

constexpr uint32_t kIgpsVersion = 1;

namespace detail {

inline void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& buf, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

// Sequential reader with truncation checks.
class ByteReader {
 public:
  ByteReader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

  void need(size_t n) {
    if (pos_ + n > data_.size())
      throw std::runtime_error(what_ + ": truncated file (needed " + std::to_string(n) +
                               " bytes at offset " + std::to_string(pos_) + ")");
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(data_[pos_++]);
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint8_t>(data_[pos_]) |
                 (static_cast<uint16_t>(static_cast<uint8_t>(data_[pos_ + 1])) << 8);
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t remaining() const { return data_.size() - pos_; }

 private:
  const std::string& data_;
  std::string what_;
  size_t pos_ = 0;
};

inline std::string read_file(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(what + ": cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::string& path, const std::string& data,
                       const std::string& what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(what + ": cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error(what + ": write failed for '" + path + "'");
}

}  // namespace detail

inline void save_params(const ParamSet<float>& params, const std::string& path) {
  std::string buf;
  buf += "IGPS";
  detail::put_u32(buf, kIgpsVersion);
  detail::put_u32(buf, static_cast<uint32_t>(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const Param<float>& p = params[i];
    require(p.name.size() <= 0xffff, "save_params: name too long");
    detail::put_u16(buf, static_cast<uint16_t>(p.name.size()));
    buf += p.name;
    require(p.shape.size() <= 0xff, "save_params: rank too large");
    buf.push_back(static_cast<char>(p.shape.size()));
    for (int e : p.shape) detail::put_u32(buf, static_cast<uint32_t>(e));
    for (long j = 0; j < p.value.size(); ++j) detail::put_f32(buf, p.value[j]);
  }
  detail::write_file(path, buf, "save_params");
}

inline ParamSet<float> load_params(const std::string& path) {
  const std::string data = detail::read_file(path, "load_params");
  detail::ByteReader r(data, "load_params");
  if (r.bytes(4) != "IGPS")
    throw std::runtime_error("load_params: bad magic in '" + path + "' (not an IGPS file)");
  const uint32_t version = r.u32();
  if (version != kIgpsVersion)
    throw std::runtime_error("load_params: unsupported version " + std::to_string(version) +
                             " in '" + path + "'");
  const uint32_t count = r.u32();
  ParamSet<float> out;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    const uint8_t rank = r.u8();
    Shape shape(rank);
    for (int d = 0; d < rank; ++d) shape[d] = static_cast<int>(r.u32());
    Param<float>& p = out.add(name, shape);
    for (long j = 0; j < p.value.size(); ++j) p.value[j] = r.f32();
  }
  if (r.remaining() != 0)
    throw std::runtime_error("load_params: trailing bytes in '" + path + "'");
  return out;
}

}  // namespace ig
