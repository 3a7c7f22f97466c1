#include "bfel/bytes.h"

#include <bit>
#include <cstring>
#include <limits>

#include "bfel/errors.h"

namespace bfel {

namespace {

// Wire format is little-endian.
std::uint32_t to_wire(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  return v;
}

std::uint64_t to_wire(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  return v;
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) {
  v = to_wire(v);
  std::uint8_t b[sizeof v];
  std::memcpy(b, &v, sizeof v);
  buf_.insert(buf_.end(), b, b + sizeof v);
}

void ByteWriter::u64(std::uint64_t v) {
  v = to_wire(v);
  std::uint8_t b[sizeof v];
  std::memcpy(b, &v, sizeof v);
  buf_.insert(buf_.end(), b, b + sizeof v);
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::raw(std::span<const std::uint8_t> data) {
  buf_.insert(buf_.end(), data.begin(), data.end());
}

void ByteWriter::blob(std::span<const std::uint8_t> data) {
  if (data.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InputError("blob too large for u32 length prefix");
  }
  u32(static_cast<std::uint32_t>(data.size()));
  raw(data);
}

void ByteWriter::str(std::string_view s) {
  blob({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) throw DecodeError("unexpected end of data");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, data_.data() + pos_, sizeof v);
  pos_ += sizeof v;
  return to_wire(v);
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, data_.data() + pos_, sizeof v);
  pos_ += sizeof v;
  return to_wire(v);
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

bool ByteReader::boolean() {
  auto v = u8();
  if (v > 1) throw DecodeError("non-canonical boolean");
  return v == 1;
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

Bytes ByteReader::blob() {
  auto n = u32();
  auto s = raw(n);
  return Bytes(s.begin(), s.end());
}

std::string ByteReader::str() {
  auto n = u32();
  auto s = raw(n);
  return std::string(s.begin(), s.end());
}

void ByteReader::expect_done() const {
  if (!done()) throw DecodeError("trailing bytes after record");
}

Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

}  // namespace bfel
