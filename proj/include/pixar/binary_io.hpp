#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pixar::io {

/// 64-bit FNV-1a. Used for artifact checksums and vocabulary content hashes.
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view bytes);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a(std::string_view bytes);

/// Little-endian binary encoder. Everything written is also fed to a running
/// checksum that finish() appends as the trailer.
class ByteWriter {
 public:
  explicit ByteWriter(std::array<char, 4> magic, std::uint32_t version);

  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void varint(std::uint64_t v);
  void str(std::string_view s);
  void f64_array(std::span<const double> values);
  void u32_array(std::span<const std::uint32_t> values);

  /// Appends the checksum trailer and returns the complete file image.
  std::vector<std::uint8_t> finish() &&;

 private:
  std::vector<std::uint8_t> buf_;
};

/// Verifies magic, version and checksum up front, then decodes the payload.
/// Every read past the payload end throws CorruptArtifact.
class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> image, std::array<char, 4> magic,
             std::uint32_t expected_version, std::string source);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::uint64_t varint();
  std::string str();
  void f64_array(std::span<double> out);
  void u32_array(std::span<std::uint32_t> out);

  /// Throws unless the whole payload has been consumed.
  void expect_end() const;
  [[noreturn]] void fail(const std::string& what) const;
  const std::string& source() const { return source_; }

 private:
  const std::uint8_t* take(std::size_t n);

  std::vector<std::uint8_t> image_;
  std::size_t pos_ = 0;
  std::size_t payload_end_ = 0;
  std::string source_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file(const std::filesystem::path& path, std::string_view text);

}  // namespace pixar::io
