#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "rphoc/error.hpp"

namespace rphoc::detail {

// Little-endian encoding regardless of host byte order.
template <class U>
void write_le(std::ostream& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  char buf[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(buf, sizeof(U));
}

template <class U>
U read_le(std::istream& in) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  in.read(reinterpret_cast<char*>(buf), sizeof(U));
  if (!in) throw InvalidInput("unexpected end of file");
  U value = 0;
  for (size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(buf[i]) << (8 * i);
  return value;
}

inline void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }
inline void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }
inline void write_i32(std::ostream& out, std::int32_t v) { write_le(out, static_cast<std::uint32_t>(v)); }
inline std::int32_t read_i32(std::istream& in) { return static_cast<std::int32_t>(read_le<std::uint32_t>(in)); }

inline void write_block(std::ostream& out, const std::string& text) {
  write_le(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline std::string read_block(std::istream& in, std::uint32_t limit = 1u << 26) {
  const auto n = read_le<std::uint32_t>(in);
  if (n > limit) throw InvalidInput("length-prefixed block too large");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw InvalidInput("unexpected end of file");
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0) throw InvalidInput(what + ": bad magic");
}

}  // namespace rphoc::detail
