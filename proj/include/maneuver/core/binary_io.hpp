#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "maneuver/core/error.hpp"
#include "maneuver/core/tensor.hpp"

namespace maneuver {

// Single-tensor container. Layout, all little-endian:
//   byte 0..3   magic "MNT1"
//   byte 4      dtype code (0 = uint8, 1 = float32, 2 = int16)
//   byte 5      rank
//   then rank x uint32 dims, then the row-major payload.
// Used for cached patches and flow fields, and embedded inside checkpoints.

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.append(b, 4);
}

inline uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

template <typename T>
struct DtypeCode;
template <>
struct DtypeCode<uint8_t> {
  static constexpr uint8_t value = 0;
};
template <>
struct DtypeCode<float> {
  static constexpr uint8_t value = 1;
};
template <>
struct DtypeCode<int16_t> {
  static constexpr uint8_t value = 2;
};

}  // namespace detail

template <typename T>
std::string encode_tensor(const Tensor<T>& t) {
  std::string out;
  out.append("MNT1");
  out.push_back(static_cast<char>(detail::DtypeCode<T>::value));
  require(t.ndim() <= 255, "encode_tensor: rank too large");
  out.push_back(static_cast<char>(t.ndim()));
  for (int64_t d : t.shape) {
    require(d >= 0 && d <= UINT32_MAX, "encode_tensor: dimension out of range");
    detail::put_u32(out, static_cast<uint32_t>(d));
  }
  const size_t nbytes = t.data.size() * sizeof(T);
  size_t pos = out.size();
  out.resize(pos + nbytes);
  if (nbytes > 0) std::memcpy(out.data() + pos, t.data.data(), nbytes);
  return out;
}

// Decodes one tensor from a byte range; advances *offset past it.
template <typename T>
Tensor<T> decode_tensor(const uint8_t* bytes, size_t size, size_t* offset, const std::string& what) {
  size_t pos = offset ? *offset : 0;
  auto need = [&](size_t n) {
    if (pos + n > size) format_error(what + ": truncated tensor data");
  };
  need(6);
  if (std::memcmp(bytes + pos, "MNT1", 4) != 0) format_error(what + ": bad tensor magic");
  const uint8_t dtype = bytes[pos + 4];
  const uint8_t rank = bytes[pos + 5];
  if (dtype != detail::DtypeCode<T>::value) {
    format_error(what + ": dtype mismatch (code " + std::to_string(int(dtype)) + ")");
  }
  pos += 6;
  std::vector<int64_t> shape(rank);
  need(4 * size_t(rank));
  for (int i = 0; i < rank; ++i) {
    shape[static_cast<size_t>(i)] = detail::get_u32(bytes + pos);
    pos += 4;
  }
  Tensor<T> t;
  t.shape = shape;
  const int64_t n = Tensor<T>::numel_of(shape);
  const size_t nbytes = static_cast<size_t>(n) * sizeof(T);
  need(nbytes);
  t.data.resize(static_cast<size_t>(n));
  if (nbytes > 0) std::memcpy(t.data.data(), bytes + pos, nbytes);
  pos += nbytes;
  if (offset) *offset = pos;
  return t;
}

inline std::vector<uint8_t> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> buf(static_cast<size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
  if (!in) io_error("read failed for " + path);
  return buf;
}

inline void write_binary_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) io_error("write failed for " + path);
}

template <typename T>
void write_tensor_file(const std::string& path, const Tensor<T>& t) {
  write_binary_file(path, encode_tensor(t));
}

template <typename T>
Tensor<T> read_tensor_file(const std::string& path) {
  const std::vector<uint8_t> bytes = read_binary_file(path);
  size_t off = 0;
  Tensor<T> t = decode_tensor<T>(bytes.data(), bytes.size(), &off, path);
  if (off != bytes.size()) format_error(path + ": trailing bytes after tensor");
  return t;
}

}  // namespace maneuver
