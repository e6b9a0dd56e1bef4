#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace cap::io {

// Little-endian encoder used by every on-disk format in the engine.
class ByteWriter {
 public:
  void put_magic(std::string_view magic);
  void put_u8(std::uint8_t v);
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f32(float v);
  void put_f32s(std::span<const float> values);
  // u32 length prefix followed by the raw bytes.
  void put_text_block(std::string_view text);

  const std::string& bytes() const { return buf_; }
  std::string release() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  // `what` names the format in error messages ("bank file", "model file", ...).
  ByteReader(std::string_view data, std::string what);

  // Throws DataError("bad magic") when the prefix does not match.
  void expect_magic(std::string_view magic);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  void f32s(std::span<float> out);
  std::string text_block();

  // Throws a truncation error naming expected vs actual byte counts.
  void require(std::uint64_t nbytes, std::string_view field) const;
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace cap::io
