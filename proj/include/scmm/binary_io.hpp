#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

namespace scmm::binary {

/// Appends the little-endian bytes of an unsigned integer.
template <typename UInt>
void put_le(std::string& out, UInt value) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename UInt>
UInt get_le(const char* in) {
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    value |= static_cast<UInt>(static_cast<unsigned char>(in[i])) << (8 * i);
  }
  return value;
}

inline void put_f32(std::string& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }
inline void put_f64(std::string& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }
inline float get_f32(const char* in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }
inline double get_f64(const char* in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

/// Whole-file helpers; both throw IoError.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace scmm::binary
