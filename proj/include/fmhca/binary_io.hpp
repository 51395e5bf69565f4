#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fmhca::io {

// Little-endian encoder into a growable byte buffer.
class ByteWriter {
 public:
  void bytes(std::string_view data) { buffer_.insert(buffer_.end(), data.begin(), data.end()); }
  void u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
  void i8(std::int8_t v) { u8(static_cast<std::uint8_t>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);

  const std::vector<char>& buffer() const { return buffer_; }

 private:
  std::vector<char> buffer_;
};

// Bounds-checked little-endian decoder; running past the end throws
// TruncatedFile.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  std::string bytes(std::size_t n);
  std::uint8_t u8();
  std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::vector<char> data_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& data);

}  // namespace fmhca::io
