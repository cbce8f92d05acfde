#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pixar/trainer.hpp"

namespace pixar {

// Line-oriented UTF-8 files with the vocabulary file's backslash escapes.
// Blank lines are skipped; a trailing '\r' is dropped.

/// One docid per line. Duplicates are kept (they count as occurrences).
std::vector<std::string> parse_docids(std::string_view text, const std::string& source);
std::vector<std::string> load_docids(const std::filesystem::path& path);
std::string format_lines(const std::vector<std::string>& lines);

/// `query<TAB>docid` per line.
std::vector<QueryDocPair> parse_pairs(std::string_view text, const std::string& source);
std::vector<QueryDocPair> load_pairs(const std::filesystem::path& path);
std::string format_pairs(const std::vector<QueryDocPair>& pairs);

/// Sorted, deduplicated copy.
std::vector<std::string> unique_docids(std::vector<std::string> docids);

}  // namespace pixar
