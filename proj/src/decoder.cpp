#include "pixar/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pixar/error.hpp"

namespace pixar {

namespace {

bool by_token(const ScoredToken& a, const ScoredToken& b) { return a.token < b.token; }

const ScoredToken* lookup(const std::vector<ScoredToken>& list, TokenId tok) {
  auto it = std::lower_bound(list.begin(), list.end(), ScoredToken{tok, 0.0}, by_token);
  return it != list.end() && it->token == tok ? &*it : nullptr;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void DecodeOptions::validate() const {
  if (beam == 0) throw InvalidArgument("beam width must be positive");
  if (top_n == 0) throw InvalidArgument("top_n must be positive");
  if (rerank_cap == 0) throw InvalidArgument("rerank cap must be positive");
  if (beam < top_n) {
    throw InvalidArgument("beam width (" + std::to_string(beam) + ") must be at least top_n (" +
                          std::to_string(top_n) + ")");
  }
}

std::vector<ScoredToken> rerank_position(std::span<const TokenId> shortlist,
                                         const Eigen::Ref<const RowVector>& x,
                                         const Matrix& token_vectors, std::size_t cap) {
  std::vector<ScoredToken> out;
  out.reserve(shortlist.size());
  for (TokenId tok : shortlist) {
    if (tok >= token_vectors.rows()) throw InvalidArgument("shortlist token out of range");
    out.push_back({tok, x.dot(token_vectors.row(tok))});
  }
  // Ranked on the raw dot product; clamping happens afterwards.
  auto better = [](const ScoredToken& a, const ScoredToken& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.token < b.token;
  };
  if (out.size() > cap) {
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(cap), out.end(),
                      better);
    out.resize(cap);
  } else {
    std::sort(out.begin(), out.end(), better);
  }
  for (auto& c : out) c.score = std::clamp(c.score, -kLogitClamp, kLogitClamp);
  return out;
}

std::vector<std::vector<ScoredToken>> shortlist_candidates(const QueryEncoding& encoding,
                                                           const Matrix& token_vectors,
                                                           const ShortlistIndex& index,
                                                           std::size_t cap) {
  const auto w0 = index.shortlist(encoding.shortlist_embedding());
  std::vector<std::vector<ScoredToken>> lists;
  lists.reserve(encoding.output_len());
  for (std::size_t t = 1; t <= encoding.output_len(); ++t) {
    auto ranked = rerank_position(w0, encoding.position(t), token_vectors, cap);
    std::sort(ranked.begin(), ranked.end(), by_token);
    lists.push_back(std::move(ranked));
  }
  return lists;
}

std::vector<std::vector<ScoredToken>> full_softmax_candidates(const QueryEncoding& encoding,
                                                              const Matrix& token_vectors) {
  const std::size_t s = encoding.output_len();
  const Matrix logits = token_vectors * encoding.vectors.bottomRows(s).transpose();  // |V| x s
  std::vector<std::vector<ScoredToken>> lists(s);
  for (std::size_t t = 0; t < s; ++t) {
    const auto col = logits.col(static_cast<Eigen::Index>(t));
    const double mx = col.maxCoeff();
    const double log_z = mx + std::log((col.array() - mx).exp().sum());
    auto& list = lists[t];
    list.reserve(static_cast<std::size_t>(col.size()));
    for (Eigen::Index v = 0; v < col.size(); ++v) {
      list.push_back({static_cast<TokenId>(v), col(v) - log_z});
    }
  }
  return lists;
}

RankedResult beam_search(const DocidTrie& trie,
                         std::span<const std::vector<ScoredToken>> candidates,
                         std::size_t beam, std::size_t top_n) {
  struct Hyp {
    std::uint32_t node;
    double score;
  };
  std::vector<Hyp> current = {{0, 0.0}};
  std::vector<Hyp> next;
  std::vector<std::pair<double, std::size_t>> emitted;  // (score, docid index)

  const std::size_t depth_limit = std::min(candidates.size(), trie.max_depth());
  for (std::size_t depth = 0; depth < depth_limit && !current.empty(); ++depth) {
    const auto& list = candidates[depth];
    next.clear();
    for (const Hyp& h : current) {
      const auto& kids = trie.node(h.node).children;
      auto expand = [&](std::uint32_t child, double token_score) {
        const double score = h.score + token_score;
        const auto& n = trie.node(child);
        if (n.docid != DocidTrie::kNoDocid) {
          emitted.emplace_back(score, static_cast<std::size_t>(n.docid));
        }
        if (!n.children.empty()) next.push_back({child, score});
      };
      if (kids.size() <= list.size()) {
        for (const auto& [tok, child] : kids) {
          if (const ScoredToken* c = lookup(list, tok)) expand(child, c->score);
        }
      } else {
        for (const ScoredToken& c : list) {
          auto it = std::lower_bound(kids.begin(), kids.end(), c.token,
                                     [](const auto& e, TokenId t) { return e.first < t; });
          if (it != kids.end() && it->first == c.token) expand(it->second, c.score);
        }
      }
    }
    auto better = [](const Hyp& a, const Hyp& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.node < b.node;
    };
    if (next.size() > beam) {
      std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(beam), next.end(),
                        better);
      next.resize(beam);
    }
    std::swap(current, next);
  }

  const auto docids = trie.docids();
  auto better = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return docids[a.second] < docids[b.second];
  };
  const std::size_t keep = std::min(top_n, emitted.size());
  std::partial_sort(emitted.begin(), emitted.begin() + static_cast<std::ptrdiff_t>(keep),
                    emitted.end(), better);
  RankedResult result;
  result.hits.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    result.hits.push_back({docids[emitted[i].second], emitted[i].first});
  }
  result.incomplete = result.hits.size() < top_n;
  return result;
}

RankedResult decode_encoding(const QueryEncoding& encoding, const Matrix& token_vectors,
                             const ShortlistIndex& index, const DocidTrie& trie,
                             const DecodeOptions& options) {
  options.validate();
  if (index.hidden_dim() != static_cast<std::size_t>(encoding.vectors.cols())) {
    throw IncompatibleArtifacts("shortlist index hidden size does not match the model");
  }
  const auto lists = shortlist_candidates(encoding, token_vectors, index, options.rerank_cap);
  auto result = beam_search(trie, lists, options.beam, options.top_n);
  result.query_truncated = encoding.truncated;
  return result;
}

RankedResult decode(std::string_view query, const ModelParams& params,
                    const ShortlistIndex& index, const DocidTrie& trie,
                    const DecodeOptions& options) {
  return decode_encoding(encode(params, query), params.token_vectors, index, trie, options);
}

RankedResult decode_full_softmax(std::string_view query, const ModelParams& params,
                                 const DocidTrie& trie, const DecodeOptions& options) {
  options.validate();
  const auto encoding = encode(params, query);
  const auto lists = full_softmax_candidates(encoding, params.token_vectors);
  auto result = beam_search(trie, lists, options.beam, options.top_n);
  result.query_truncated = encoding.truncated;
  return result;
}

void check_compatible(const ModelParams& params, const ShortlistIndex* index,
                      const DocidTrie& trie) {
  if (trie.vocab_hash() != params.vocab_hash) {
    throw IncompatibleArtifacts("trie vocabulary hash " + hex(trie.vocab_hash()) +
                                " does not match model vocabulary hash " +
                                hex(params.vocab_hash));
  }
  if (index != nullptr) {
    if (index->vocab_hash() != params.vocab_hash) {
      throw IncompatibleArtifacts("shortlist vocabulary hash " + hex(index->vocab_hash()) +
                                  " does not match model vocabulary hash " +
                                  hex(params.vocab_hash));
    }
    if (index->hidden_dim() != params.config.hidden_dim) {
      throw IncompatibleArtifacts("shortlist index hidden size does not match the model");
    }
  }
}

}  // namespace pixar
