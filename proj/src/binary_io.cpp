#include "pixar/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pixar/error.hpp"

namespace pixar::io {

static_assert(std::endian::native == std::endian::little,
              "artifact encoding assumes a little-endian host");

void Fnv1a::update(std::span<const std::uint8_t> bytes) {
  for (std::uint8_t b : bytes) {
    state_ ^= b;
    state_ *= 0x100000001b3ULL;
  }
}

void Fnv1a::update(std::string_view bytes) {
  update(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::uint64_t fnv1a(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.digest();
}

ByteWriter::ByteWriter(std::array<char, 4> magic, std::uint32_t version) {
  for (char c : magic) buf_.push_back(static_cast<std::uint8_t>(c));
  u32(version);
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::varint(std::uint64_t v) {
  while (v >= 0x80) {
    buf_.push_back(static_cast<std::uint8_t>(v | 0x80));
    v >>= 7;
  }
  buf_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::str(std::string_view s) {
  varint(s.size());
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::f64_array(std::span<const double> values) {
  for (double v : values) f64(v);
}

void ByteWriter::u32_array(std::span<const std::uint32_t> values) {
  for (auto v : values) u32(v);
}

std::vector<std::uint8_t> ByteWriter::finish() && {
  Fnv1a h;
  h.update(buf_);
  u64(h.digest());
  return std::move(buf_);
}

ByteReader::ByteReader(std::vector<std::uint8_t> image, std::array<char, 4> magic,
                       std::uint32_t expected_version, std::string source)
    : image_(std::move(image)), source_(std::move(source)) {
  if (image_.size() < 16) fail("file too short");
  if (std::memcmp(image_.data(), magic.data(), 4) != 0) fail("bad magic");
  payload_end_ = image_.size() - 8;
  Fnv1a h;
  h.update(std::span(image_.data(), payload_end_));
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<std::uint64_t>(image_[payload_end_ + i]) << (8 * i);
  }
  if (stored != h.digest()) fail("checksum mismatch");
  pos_ = 4;
  const std::uint32_t version = u32();
  if (version != expected_version) {
    fail("unsupported version " + std::to_string(version));
  }
}

const std::uint8_t* ByteReader::take(std::size_t n) {
  if (n > payload_end_ - pos_) fail("unexpected end of payload");
  const std::uint8_t* p = image_.data() + pos_;
  pos_ += n;
  return p;
}

std::uint8_t ByteReader::u8() { return *take(1); }

std::uint32_t ByteReader::u32() {
  const std::uint8_t* p = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  const std::uint8_t* p = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::uint64_t ByteReader::varint() {
  std::uint64_t v = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    const std::uint8_t b = u8();
    v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
    if ((b & 0x80) == 0) return v;
  }
  fail("varint overflow");
}

std::string ByteReader::str() {
  const std::uint64_t n = varint();
  if (n > payload_end_ - pos_) fail("string length exceeds payload");
  const std::uint8_t* p = take(static_cast<std::size_t>(n));
  return std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(n));
}

void ByteReader::f64_array(std::span<double> out) {
  if (out.size() > (payload_end_ - pos_) / 8) fail("array exceeds payload");
  for (double& v : out) v = f64();
}

void ByteReader::u32_array(std::span<std::uint32_t> out) {
  if (out.size() > (payload_end_ - pos_) / 4) fail("array exceeds payload");
  for (auto& v : out) v = u32();
}

void ByteReader::expect_end() const {
  if (pos_ != payload_end_) fail("trailing bytes after payload");
}

void ByteReader::fail(const std::string& what) const {
  throw CorruptArtifact(source_ + ": " + what);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace pixar::io
