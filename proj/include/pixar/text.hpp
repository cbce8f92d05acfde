#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pixar::text {

enum class CharClass : std::uint8_t { kLetter, kDigit, kPunct, kSpace };

/// One decoded code point and the byte range it occupies.
struct CodePoint {
  char32_t value;
  std::size_t offset;
  std::size_t length;
};

/// Decodes UTF-8. Invalid sequences decode byte-by-byte as U+FFFD so that
/// offsets always tile the input.
std::vector<CodePoint> decode_utf8(std::string_view s);

/// Number of bytes in `s` that start a character (i.e. are not UTF-8
/// continuation bytes). Equals the code point count for valid UTF-8.
std::size_t char_count(std::string_view s);

bool is_space(char32_t c);

/// ASCII is classified exactly; outside ASCII, whitespace and the general
/// punctuation / CJK punctuation blocks are recognized and everything else
/// counts as a letter. Locale-independent.
CharClass classify(char32_t c);

/// Backslash escaping used by every text artifact: `\t`, `\n`, `\r`,
/// `\\`, and `\xHH` for control bytes and bytes that are not valid UTF-8.
std::string escape(std::string_view raw);
/// Inverse of escape(); throws InvalidArgument on a malformed escape.
std::string unescape(std::string_view escaped);

std::vector<std::string_view> split(std::string_view s, char sep);

}  // namespace pixar::text
