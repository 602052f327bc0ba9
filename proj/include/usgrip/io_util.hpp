#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "usgrip/error.hpp"

namespace usgrip {

// Little-endian primitive encode/decode over std streams. Reads throw
// Errc::truncated when the stream ends mid-record.

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}

  void bytes(std::span<const uint8_t> v) {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
  }
  void u8(uint8_t v) { out_.put(static_cast<char>(v)); }
  void u16(uint16_t v) { put(v, 2); }
  void u32(uint32_t v) { put(v, 4); }
  void u64(uint64_t v) { put(v, 8); }
  void i32(int32_t v) { put(static_cast<uint32_t>(v), 4); }
  void f32(float v) { put(std::bit_cast<uint32_t>(v), 4); }

  bool good() const { return out_.good(); }

 private:
  void put(uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(buf, n);
  }
  std::ostream& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  void bytes(std::span<uint8_t> v) {
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size()));
    require(in_.gcount() == static_cast<std::streamsize>(v.size()), Errc::truncated,
            "file ends mid-record");
  }
  uint8_t u8() { return static_cast<uint8_t>(get(1)); }
  uint16_t u16() { return static_cast<uint16_t>(get(2)); }
  uint32_t u32() { return static_cast<uint32_t>(get(4)); }
  uint64_t u64() { return get(8); }
  int32_t i32() { return static_cast<int32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(static_cast<uint32_t>(get(4))); }

  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  uint64_t get(int n) {
    uint8_t buf[8];
    in_.read(reinterpret_cast<char*>(buf), n);
    require(in_.gcount() == n, Errc::truncated, "file ends mid-record");
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
};

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::io, "cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open for reading: " + path);
  return in;
}

}  // namespace usgrip
