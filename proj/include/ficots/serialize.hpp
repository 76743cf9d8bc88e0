#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ficots {

// Little-endian binary buffer, shared by the embedding and checkpoint
// container formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);  // raw IEEE bits, round-trips exactly
  void magic(std::string_view four_bytes);
  void str(std::string_view s);  // u32 length + bytes

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  void write_file(const std::string& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data)
      : data_(std::move(data)) {}
  static ByteReader from_file(const std::string& path);

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void expect_magic(std::string_view four_bytes, const std::string& what);
  std::string str();
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n);
  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace ficots
