#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pixar/model.hpp"
#include "pixar/shortlist.hpp"
#include "pixar/trie.hpp"

namespace pixar {

struct DecodeOptions {
  std::size_t beam = 100;
  std::size_t top_n = 100;
  /// Tokens kept per position on the shortlist path.
  std::size_t rerank_cap = 512;

  void validate() const;
};

struct ScoredToken {
  TokenId token;
  double score;
};

struct ScoredDocid {
  std::string docid;
  double score;
};

struct RankedResult {
  std::vector<ScoredDocid> hits;  // score descending, ties by docid
  /// Fewer than top_n docids were reachable.
  bool incomplete = false;
  bool query_truncated = false;
};

/// Shortlist tokens ordered by x . w descending (ties to the smaller id),
/// truncated to `cap`. Scores are clamped logits, i.e. log ~P.
std::vector<ScoredToken> rerank_position(std::span<const TokenId> shortlist,
                                         const Eigen::Ref<const RowVector>& x,
                                         const Matrix& token_vectors, std::size_t cap);

/// Per-depth candidate lists for the shortlist path, each sorted by token id.
std::vector<std::vector<ScoredToken>> shortlist_candidates(const QueryEncoding& encoding,
                                                           const Matrix& token_vectors,
                                                           const ShortlistIndex& index,
                                                           std::size_t cap);

/// Per-depth candidate lists over the whole vocabulary with exact log P.
std::vector<std::vector<ScoredToken>> full_softmax_candidates(const QueryEncoding& encoding,
                                                              const Matrix& token_vectors);

/// Depth-synchronous beam search over the trie. Candidate lists must be
/// sorted by token id; list t scores depth t + 1. A docid is emitted when its
/// terminal is reached, before the beam is pruned at that depth.
RankedResult beam_search(const DocidTrie& trie,
                         std::span<const std::vector<ScoredToken>> candidates,
                         std::size_t beam, std::size_t top_n);

RankedResult decode_encoding(const QueryEncoding& encoding, const Matrix& token_vectors,
                             const ShortlistIndex& index, const DocidTrie& trie,
                             const DecodeOptions& options);

/// Encode, shortlist, rerank, and beam search.
RankedResult decode(std::string_view query, const ModelParams& params,
                    const ShortlistIndex& index, const DocidTrie& trie,
                    const DecodeOptions& options);

/// Same search with the full vocabulary at every position. Reference path.
RankedResult decode_full_softmax(std::string_view query, const ModelParams& params,
                                 const DocidTrie& trie, const DecodeOptions& options);

/// Throws IncompatibleArtifacts unless all vocabulary hashes agree.
void check_compatible(const ModelParams& params, const ShortlistIndex* index,
                      const DocidTrie& trie);

}  // namespace pixar
