#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pixar/error.hpp"

namespace pixar {

enum class CandidateKind : std::uint8_t { kSubword, kWord, kPhrase };

struct Candidate {
  std::string text;
  std::uint64_t occurrences = 0;
  CandidateKind kind = CandidateKind::kSubword;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Enumerates every substring of up to `max_len` characters that
///  - lies inside one word (subword/word), or spans complete words joined by
///    single ASCII spaces (phrase);
///  - keeps one character class per word segment;
///  - occurs at least `min_occur` times, counting each start offset once.
/// Docids are counted as given, so duplicates contribute repeatedly.
/// Result is sorted by text.
std::vector<Candidate> generate_candidates(std::span<const std::string> docids,
                                           std::size_t max_len, std::uint64_t min_occur);

struct VocabularyBuildReport {
  std::size_t requested_size = 0;
  std::size_t actual_size = 0;
  std::size_t iterations = 0;
  /// The candidate pool was smaller than requested; everything was kept.
  bool pool_exhausted = false;
};

/// Dense token table: id 0 is PAD (the empty string), ids 1..256 are the
/// single-byte fallback tokens, learned tokens follow. Immutable once built.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr std::size_t kReservedCount = 257;
  static constexpr TokenId byte_token(std::uint8_t b) { return static_cast<TokenId>(b) + 1; }

  /// Reserved tokens only: a byte/character-level vocabulary.
  Vocabulary();

  /// Reserved tokens followed by `learned` in the given order. Throws on
  /// empty or duplicate strings (including clashes with byte tokens).
  static Vocabulary from_tokens(std::span<const std::string> learned,
                                std::span<const std::uint64_t> scores = {});

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::uint64_t score(TokenId id) const { return scores_.at(id); }
  std::span<const std::string> tokens() const { return tokens_; }
  std::span<const std::uint64_t> scores() const { return scores_; }
  bool is_reserved(TokenId id) const { return id < kReservedCount; }
  std::optional<TokenId> find(std::string_view token) const;
  std::size_t max_token_bytes() const { return max_token_bytes_; }

  /// Minimum-token-count segmentation; among equally short segmentations the
  /// one taking the longest token first wins. Total thanks to byte tokens.
  std::vector<TokenId> tokenize(std::string_view text) const;
  /// Throws InvalidArgument on an id outside the table.
  std::string detokenize(std::span<const TokenId> ids) const;

  /// Characters covered by each token when tokenizing every text in `corpus`.
  std::vector<std::uint64_t> coverage(std::span<const std::string> corpus) const;

  /// Hash of the token strings in id order; cross-links other artifacts.
  std::uint64_t content_hash() const { return hash_; }

  std::string serialize() const;
  static Vocabulary parse(std::string_view text, const std::string& source);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.scores_ == b.scores_;
  }

 private:
  friend Vocabulary build_vocabulary(std::span<const Candidate>, std::span<const std::string>,
                                     std::size_t, VocabularyBuildReport*, double);

  struct TrieNode {
    std::vector<std::pair<std::uint8_t, std::uint32_t>> children;  // sorted by byte
    std::int64_t token = -1;
  };

  void add_token(std::string token, std::uint64_t score);
  void finalize();

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> scores_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<TrieNode> trie_;
  std::size_t max_token_bytes_ = 1;
  std::uint64_t hash_ = 0;
};

/// Iterative refinement: tokenize `corpus`, score every learned token by the
/// characters it covers, drop the lowest-ranked `prune_fraction` of prunable
/// tokens (single characters are never pruned), repeat until `target_size`.
/// Final ids are ordered by (score desc, length desc, text asc).
Vocabulary build_vocabulary(std::span<const Candidate> candidates,
                            std::span<const std::string> corpus, std::size_t target_size,
                            VocabularyBuildReport* report = nullptr,
                            double prune_fraction = 0.1);

}  // namespace pixar
