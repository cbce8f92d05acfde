#include "pixar/vocabulary.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>

#include "pixar/binary_io.hpp"
#include "pixar/text.hpp"

namespace pixar {

namespace {

using text::CharClass;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// (score desc, length desc, text asc)
bool ranks_before(const std::string& a, std::uint64_t score_a, const std::string& b,
                  std::uint64_t score_b) {
  if (score_a != score_b) return score_a > score_b;
  const auto la = text::char_count(a);
  const auto lb = text::char_count(b);
  if (la != lb) return la > lb;
  return a < b;
}

}  // namespace

std::vector<Candidate> generate_candidates(std::span<const std::string> docids,
                                           std::size_t max_len, std::uint64_t min_occur) {
  if (max_len < 1) throw InvalidArgument("max_len must be >= 1");
  if (min_occur < 1) throw InvalidArgument("min_occur must be >= 1");

  std::map<std::string, std::pair<std::uint64_t, CandidateKind>, std::less<>> counts;
  for (const std::string& doc : docids) {
    const auto cps = text::decode_utf8(doc);
    const std::size_t n = cps.size();
    auto at_word_end = [&](std::size_t i) { return i + 1 == n || text::is_space(cps[i + 1].value); };
    for (std::size_t a = 0; a < n; ++a) {
      if (text::is_space(cps[a].value)) continue;
      const bool word_start = a == 0 || text::is_space(cps[a - 1].value);
      CharClass segment = text::classify(cps[a].value);
      bool has_space = false;
      bool after_space = false;
      for (std::size_t b = a; b < n && b - a < max_len; ++b) {
        const char32_t c = cps[b].value;
        const CharClass cls = text::classify(c);
        if (cls == CharClass::kSpace) {
          if (c != U' ' || !word_start || after_space) break;
          has_space = true;
          after_space = true;
          continue;
        }
        if (after_space) {
          segment = cls;
          after_space = false;
        } else if (cls != segment) {
          break;
        }
        if (has_space && !at_word_end(b)) continue;
        CandidateKind kind = CandidateKind::kSubword;
        if (has_space) {
          kind = CandidateKind::kPhrase;
        } else if (word_start && at_word_end(b)) {
          kind = CandidateKind::kWord;
        }
        const std::size_t begin = cps[a].offset;
        const std::size_t end = cps[b].offset + cps[b].length;
        auto [it, inserted] = counts.try_emplace(doc.substr(begin, end - begin), 0, kind);
        ++it->second.first;
      }
    }
  }

  std::vector<Candidate> out;
  for (auto& [token, entry] : counts) {
    if (entry.first >= min_occur) out.push_back({token, entry.first, entry.second});
  }
  return out;
}

Vocabulary::Vocabulary() {
  add_token(std::string(), 0);
  for (int b = 0; b < 256; ++b) add_token(std::string(1, static_cast<char>(b)), 0);
  finalize();
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> learned,
                                   std::span<const std::uint64_t> scores) {
  if (!scores.empty() && scores.size() != learned.size()) {
    throw InvalidArgument("token/score count mismatch");
  }
  Vocabulary v;
  for (std::size_t i = 0; i < learned.size(); ++i) {
    if (learned[i].empty()) throw InvalidArgument("empty token string");
    if (v.index_.contains(learned[i])) {
      throw InvalidArgument("duplicate token '" + text::escape(learned[i]) + "'");
    }
    v.add_token(learned[i], scores.empty() ? 0 : scores[i]);
  }
  v.finalize();
  return v;
}

void Vocabulary::add_token(std::string token, std::uint64_t score) {
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  scores_.push_back(score);
}

void Vocabulary::finalize() {
  trie_.assign(1, TrieNode{});
  max_token_bytes_ = 1;
  io::Fnv1a h;
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    const std::string& tok = tokens_[id];
    const std::uint64_t len = tok.size();
    h.update(std::string_view(reinterpret_cast<const char*>(&len), sizeof len));
    h.update(tok);
    if (tok.empty()) continue;
    max_token_bytes_ = std::max(max_token_bytes_, tok.size());
    std::uint32_t node = 0;
    for (char ch : tok) {
      const auto byte = static_cast<std::uint8_t>(ch);
      auto& kids = trie_[node].children;
      auto it = std::lower_bound(kids.begin(), kids.end(), byte,
                                 [](const auto& e, std::uint8_t b) { return e.first < b; });
      if (it != kids.end() && it->first == byte) {
        node = it->second;
      } else {
        const auto child = static_cast<std::uint32_t>(trie_.size());
        kids.insert(it, {byte, child});
        trie_.emplace_back();
        node = child;
      }
    }
    trie_[node].token = static_cast<std::int64_t>(id);
  }
  hash_ = h.digest();
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw InvalidArgument("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  const std::size_t n = text.size();
  // best_count[i]: fewest tokens covering text[i..n); best_token[i]: first token.
  std::vector<std::uint32_t> best_count(n + 1, 0);
  std::vector<std::uint32_t> best_len(n + 1, 0);
  std::vector<TokenId> best_token(n + 1, kPad);
  for (std::size_t i = n; i-- > 0;) {
    best_count[i] = UINT32_MAX;
    std::uint32_t node = 0;
    for (std::size_t j = i; j < n; ++j) {
      const auto byte = static_cast<std::uint8_t>(text[j]);
      const auto& kids = trie_[node].children;
      auto it = std::lower_bound(kids.begin(), kids.end(), byte,
                                 [](const auto& e, std::uint8_t b) { return e.first < b; });
      if (it == kids.end() || it->first != byte) break;
      node = it->second;
      if (trie_[node].token < 0) continue;
      const std::uint32_t cost = best_count[j + 1] + 1;
      if (cost <= best_count[i]) {  // <=: prefer the longer first token
        best_count[i] = cost;
        best_len[i] = static_cast<std::uint32_t>(j + 1 - i);
        best_token[i] = static_cast<TokenId>(trie_[node].token);
      }
    }
  }
  std::vector<TokenId> ids;
  ids.reserve(n > 0 ? best_count[0] : 0);
  for (std::size_t i = 0; i < n; i += best_len[i]) ids.push_back(best_token[i]);
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token(id);
  return out;
}

std::vector<std::uint64_t> Vocabulary::coverage(std::span<const std::string> corpus) const {
  std::vector<std::uint64_t> covered(tokens_.size(), 0);
  for (const std::string& doc : corpus) {
    for (TokenId id : tokenize(doc)) covered[id] += text::char_count(tokens_[id]);
  }
  return covered;
}

std::string Vocabulary::serialize() const {
  std::string out = "#pixar-vocab v1 size=" + std::to_string(tokens_.size()) + "\n";
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    out += std::to_string(id);
    out += '\t';
    out += std::to_string(scores_[id]);
    out += '\t';
    out += text::escape(tokens_[id]);
    out += '\n';
  }
  out += "#checksum " + hex64(io::fnv1a(out)) + "\n";
  return out;
}

Vocabulary Vocabulary::parse(std::string_view data, const std::string& source) {
  auto corrupt = [&](const std::string& what) -> CorruptArtifact {
    return CorruptArtifact(source + ": " + what);
  };
  const std::size_t trailer = data.rfind("#checksum ");
  if (trailer == std::string_view::npos) throw corrupt("missing checksum trailer");
  const std::string_view body = data.substr(0, trailer);
  std::string_view trailer_line = data.substr(trailer + 10);
  if (!trailer_line.empty() && trailer_line.back() == '\n') trailer_line.remove_suffix(1);
  if (trailer_line != hex64(io::fnv1a(body))) throw corrupt("checksum mismatch");

  auto lines = text::split(body, '\n');
  if (lines.empty() || !lines.back().empty()) throw corrupt("body must end with a newline");
  lines.pop_back();
  constexpr std::string_view kHeader = "#pixar-vocab v1 size=";
  if (lines.empty() || !lines[0].starts_with(kHeader)) throw corrupt("bad header");
  std::size_t declared = 0;
  {
    const auto num = lines[0].substr(kHeader.size());
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), declared);
    if (ec != std::errc() || p != num.data() + num.size()) throw corrupt("bad size field");
  }
  if (lines.size() - 1 != declared) throw corrupt("size field disagrees with entry count");
  if (declared < kReservedCount) throw corrupt("missing reserved tokens");

  std::vector<std::string> learned;
  std::vector<std::uint64_t> learned_scores;
  std::vector<std::uint64_t> reserved_scores;
  const Vocabulary reserved;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = text::split(lines[i], '\t');
    if (fields.size() != 3) throw corrupt("line " + std::to_string(i + 1) + ": expected 3 fields");
    std::size_t id = 0;
    std::uint64_t score = 0;
    auto r1 = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), id);
    auto r2 = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), score);
    if (r1.ec != std::errc() || r2.ec != std::errc() || id != i - 1) {
      throw corrupt("line " + std::to_string(i + 1) + ": bad id or score");
    }
    std::string tok;
    try {
      tok = text::unescape(fields[2]);
    } catch (const InvalidArgument& e) {
      throw corrupt("line " + std::to_string(i + 1) + ": " + e.what());
    }
    if (id < kReservedCount) {
      if (tok != reserved.tokens_[id]) throw corrupt("reserved token " + std::to_string(id) + " altered");
      reserved_scores.push_back(score);
    } else {
      learned.push_back(std::move(tok));
      learned_scores.push_back(score);
    }
  }
  Vocabulary v;
  try {
    v = from_tokens(learned, learned_scores);
  } catch (const InvalidArgument& e) {
    throw corrupt(e.what());
  }
  std::copy(reserved_scores.begin(), reserved_scores.end(), v.scores_.begin());
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
               path.string());
}

Vocabulary build_vocabulary(std::span<const Candidate> candidates,
                            std::span<const std::string> corpus, std::size_t target_size,
                            VocabularyBuildReport* report, double prune_fraction) {
  if (!(prune_fraction > 0.0 && prune_fraction <= 1.0)) {
    throw InvalidArgument("prune_fraction must be in (0, 1]");
  }
  // Single ASCII characters already exist as byte tokens.
  std::vector<std::string> pool;
  std::size_t unprunable = 0;
  for (const Candidate& c : candidates) {
    if (c.text.size() == 1) continue;
    pool.push_back(c.text);
    if (text::char_count(c.text) == 1) ++unprunable;
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (target_size < Vocabulary::kReservedCount + unprunable) {
    throw InvalidArgument("target_size " + std::to_string(target_size) + " below reserved + " +
                          "single-character tokens (" +
                          std::to_string(Vocabulary::kReservedCount + unprunable) + ")");
  }

  VocabularyBuildReport rep;
  rep.requested_size = target_size;
  while (Vocabulary::kReservedCount + pool.size() > target_size) {
    const Vocabulary trial = Vocabulary::from_tokens(pool);
    const auto covered = trial.coverage(corpus);
    std::vector<std::size_t> prunable;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (text::char_count(pool[i]) > 1) prunable.push_back(i);
    }
    const std::size_t excess = Vocabulary::kReservedCount + pool.size() - target_size;
    const auto batch = static_cast<std::size_t>(
        std::ceil(prune_fraction * static_cast<double>(prunable.size())));
    const std::size_t n_remove = std::min(excess, std::max<std::size_t>(batch, 1));
    auto score_of = [&](std::size_t i) { return covered[Vocabulary::kReservedCount + i]; };
    // Worst-ranked first.
    std::sort(prunable.begin(), prunable.end(), [&](std::size_t a, std::size_t b) {
      return ranks_before(pool[b], score_of(b), pool[a], score_of(a));
    });
    std::vector<bool> drop(pool.size(), false);
    for (std::size_t k = 0; k < n_remove; ++k) drop[prunable[k]] = true;
    std::vector<std::string> kept;
    kept.reserve(pool.size() - n_remove);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!drop[i]) kept.push_back(std::move(pool[i]));
    }
    pool = std::move(kept);
    ++rep.iterations;
  }

  const Vocabulary last = Vocabulary::from_tokens(pool);
  const auto covered = last.coverage(corpus);
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto score_of = [&](std::size_t i) { return covered[Vocabulary::kReservedCount + i]; };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(pool[a], score_of(a), pool[b], score_of(b));
  });
  std::vector<std::string> tokens;
  std::vector<std::uint64_t> scores;
  for (std::size_t i : order) {
    tokens.push_back(pool[i]);
    scores.push_back(score_of(i));
  }
  Vocabulary result = Vocabulary::from_tokens(tokens, scores);
  // Reserved tokens carry their coverage too.
  std::copy(covered.begin(), covered.begin() + Vocabulary::kReservedCount, result.scores_.begin());
  rep.actual_size = result.size();
  rep.pool_exhausted = result.size() < target_size;
  if (report != nullptr) *report = rep;
  return result;
}

}  // namespace pixar
