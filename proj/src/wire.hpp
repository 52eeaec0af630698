#pragma once

// Little-endian primitives shared by the binary file codecs. Byte order is
// explicit so containers stay bit-exact across hosts.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvl::wire {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(out, bits);
}

inline void put_f64s(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) put_f64(out, d);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(path + ": truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error(path + ": truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64(std::istream& in, const std::string& path) {
  const std::uint64_t bits = get_u64(in, path);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

inline void get_f64s(std::istream& in, const std::string& path,
                     std::vector<double>& v, std::size_t n) {
  v.resize(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = get_f64(in, path);
}

inline std::string get_string(std::istream& in, const std::string& path) {
  const std::uint32_t len = get_u32(in, path);
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len))
    throw std::runtime_error(path + ": truncated file");
  return s;
}

}  // namespace cvl::wire
