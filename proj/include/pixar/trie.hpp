#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixar/vocabulary.hpp"

namespace pixar {

/// Prefix tree over tokenized docids. Node 0 is the root; children are kept
/// sorted by token id. A terminal may be interior when one docid's token
/// sequence is a prefix of another's.
class DocidTrie {
 public:
  static constexpr std::int64_t kNoDocid = -1;

  struct Node {
    std::vector<std::pair<TokenId, std::uint32_t>> children;
    std::int64_t docid = kNoDocid;
  };

  DocidTrie();

  /// Deduplicates and sorts the docids; empty strings are rejected.
  static DocidTrie build(std::span<const std::string> docids, const Vocabulary& vocab);
  /// Docids with explicit token sequences; throws on duplicate docids or
  /// sequences.
  static DocidTrie from_sequences(std::span<const std::string> docids,
                                  std::span<const std::vector<TokenId>> sequences,
                                  std::uint64_t vocab_hash);

  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(std::uint32_t i) const { return nodes_[i]; }
  std::span<const std::string> docids() const { return docids_; }
  std::size_t max_depth() const { return max_depth_; }
  std::uint64_t vocab_hash() const { return vocab_hash_; }

  /// Docid index spelled by `sequence`, if any.
  std::optional<std::size_t> find(std::span<const TokenId> sequence) const;
  /// Token sequence of each docid, recovered by walking the trie.
  std::vector<std::vector<TokenId>> sequences() const;

  std::vector<std::uint8_t> serialize() const;
  static DocidTrie deserialize(std::vector<std::uint8_t> image, const std::string& source);
  void save(const std::filesystem::path& path) const;
  static DocidTrie load(const std::filesystem::path& path);

  friend bool operator==(const DocidTrie& a, const DocidTrie& b);

 private:
  void insert(std::span<const TokenId> sequence, std::size_t docid);
  /// Node indices in preorder, matching the file layout.
  void renumber_preorder();

  std::vector<Node> nodes_;
  std::vector<std::string> docids_;
  std::size_t max_depth_ = 0;
  std::uint64_t vocab_hash_ = 0;
};

}  // namespace pixar
