// Little-endian binary file helpers shared by the model, feature and
// codebook serializers. Reads throw FormatError on truncation.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "msh/errors.hpp"

namespace msh::io {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  write_bytes(os, b, 4);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  read_bytes(is, b, 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
  const std::uint64_t lo = read_u32(is, what);
  const std::uint64_t hi = read_u32(is, what);
  return lo | (hi << 32);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline float read_f32(std::istream& is, const char* what) {
  const std::uint32_t bits = read_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_f32_block(std::ostream& os, const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) write_f32(os, static_cast<float>(p[i]));
}

inline void read_f32_block(std::istream& is, double* p, std::size_t n, const char* what) {
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<double>(read_f32(is, what));
}

inline void write_magic(std::ostream& os, const char magic[4]) { write_bytes(os, magic, 4); }

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
  char got[4];
  read_bytes(is, got, 4, what);
  if (std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string("bad magic for ") + what + ": expected '" +
                      std::string(magic, 4) + "', got '" + std::string(got, 4) + "'");
  }
}

inline std::ofstream open_output(const std::string& path, const char* what) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(std::string("cannot open ") + what + " for writing: " + path);
  return os;
}

inline std::ifstream open_input(const std::string& path, const char* what) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(std::string("cannot open ") + what + ": " + path);
  return is;
}

}  // namespace msh::io
