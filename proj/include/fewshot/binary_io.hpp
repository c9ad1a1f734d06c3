#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace fewshot::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

inline void write_f32(std::ostream& out, float v) { out.write(reinterpret_cast<const char*>(&v), 4); }

inline std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw std::runtime_error(std::string("truncated file reading ") + what);
  return v;
}

inline float read_f32(std::istream& in, const char* what) {
  float v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw std::runtime_error(std::string("truncated file reading ") + what);
  return v;
}

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4] = {};
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw std::runtime_error(std::string("bad magic, expected \"") + magic + "\"");
  }
}

}  // namespace fewshot::binio
