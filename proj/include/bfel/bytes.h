#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bfel {

using Bytes = std::vector<std::uint8_t>;

// Canonical little-endian encoder. Strings and byte blobs are u32
// length-prefixed; doubles are written as their IEEE-754 bit pattern.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void boolean(bool v) { u8(v ? 1 : 0); }
  void raw(std::span<const std::uint8_t> data);
  void blob(std::span<const std::uint8_t> data);
  void str(std::string_view s);
  void reserve_more(std::size_t n) { buf_.reserve(buf_.size() + n); }

  const Bytes& bytes() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  Bytes buf_;
};

// Strict decoder; every read past the end or non-canonical value throws
// DecodeError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  bool boolean();
  std::span<const std::uint8_t> raw(std::size_t n);
  Bytes blob();
  std::string str();

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }
  // Throws unless every byte has been consumed.
  void expect_done() const;

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

Bytes to_bytes(std::string_view s);

}  // namespace bfel
