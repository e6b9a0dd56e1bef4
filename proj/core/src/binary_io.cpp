#include "cap/binary_io.h"

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>

#include "cap/errors.h"

namespace cap::io {

void ByteWriter::put_magic(std::string_view magic) { buf_.append(magic); }

void ByteWriter::put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_f32s(std::span<const float> values) {
  buf_.reserve(buf_.size() + 4 * values.size());
  for (float v : values) put_f32(v);
}

void ByteWriter::put_text_block(std::string_view text) {
  if (text.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError("metadata block exceeds 4 GiB");
  }
  put_u32(static_cast<std::uint32_t>(text.size()));
  buf_.append(text);
}

ByteReader::ByteReader(std::string_view data, std::string what)
    : data_(data), what_(std::move(what)) {}

void ByteReader::expect_magic(std::string_view magic) {
  if (remaining() < magic.size() || data_.substr(pos_, magic.size()) != magic) {
    throw DataError(what_ + ": bad magic (expected \"" + std::string(magic) + "\")");
  }
  pos_ += magic.size();
}

void ByteReader::require(std::uint64_t nbytes, std::string_view field) const {
  if (nbytes > remaining()) {
    throw DataError(what_ + ": truncated " + std::string(field) + ": expected " +
                    std::to_string(nbytes) + " bytes, got " + std::to_string(remaining()));
  }
}

std::uint8_t ByteReader::u8() {
  require(1, "header");
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t ByteReader::u32() {
  require(4, "header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  require(8, "header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

void ByteReader::f32s(std::span<float> out) {
  require(4ull * out.size(), "payload");
  for (float& v : out) v = f32();
}

std::string ByteReader::text_block() {
  const std::uint32_t len = u32();
  require(len, "metadata");
  std::string text(data_.substr(pos_, len));
  pos_ += len;
  return text;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace cap::io
