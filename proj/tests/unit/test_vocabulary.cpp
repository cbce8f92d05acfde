#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pixar/rng.hpp"
#include "pixar/text.hpp"
#include "pixar/vocabulary.hpp"
#include "support/candidate_oracle.hpp"

using namespace pixar;
using testing::oracle_candidates;

namespace {

std::uint64_t count_of(const std::vector<Candidate>& cands, const std::string& text) {
  for (const auto& c : cands) {
    if (c.text == text) return c.occurrences;
  }
  return 0;
}

// Exhaustive minimum segmentation length, for short strings.
std::size_t oracle_min_tokens(const Vocabulary& v, const std::string& s) {
  std::vector<std::size_t> best(s.size() + 1, SIZE_MAX);
  best[s.size()] = 0;
  for (std::size_t i = s.size(); i-- > 0;) {
    for (std::size_t len = 1; i + len <= s.size(); ++len) {
      if (v.find(s.substr(i, len)) && best[i + len] != SIZE_MAX) {
        best[i] = std::min(best[i], best[i + len] + 1);
      }
    }
  }
  return best[0];
}

std::string random_phrase_text(Rng& rng) {
  static const char* words[] = {"red", "apple", "car", "des", "moines", "iowa", "2024", "x-1", "\xCE\xA9"};
  std::string s;
  const auto n = 1 + rng.below(4);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (i) s += rng.below(8) == 0 ? "  " : " ";
    s += words[rng.below(9)];
  }
  return s;
}

}  // namespace

TEST_CASE("generate_candidates: red apple fixture") {
  const std::vector<std::string> docs = {"red apple", "red apple", "red car"};
  const auto cands = generate_candidates(docs, 9, 2);
  CHECK(count_of(cands, "red") == 3);
  CHECK(count_of(cands, "apple") == 2);
  CHECK(count_of(cands, "red apple") == 2);
  CHECK(count_of(cands, "car") == 0);
  CHECK(count_of(cands, "ed ap") == 0);

  const auto oracle = oracle_candidates(docs, 9, 2);
  REQUIRE(oracle.size() == cands.size());
  for (const auto& c : cands) CHECK(oracle.at(c.text) == c.occurrences);

  for (const auto& c : cands) {
    if (c.text == "red apple") CHECK(c.kind == CandidateKind::kPhrase);
    if (c.text == "apple") CHECK(c.kind == CandidateKind::kWord);
    if (c.text == "pp") CHECK(c.kind == CandidateKind::kSubword);
  }
}

TEST_CASE("generate_candidates: edge cases") {
  CHECK(generate_candidates({}, 9, 1).empty());
  const std::vector<std::string> mixed = {"a1"};
  const auto cands = generate_candidates(mixed, 9, 1);
  CHECK(count_of(cands, "a") == 1);
  CHECK(count_of(cands, "1") == 1);
  CHECK(count_of(cands, "a1") == 0);
  CHECK_THROWS_AS(generate_candidates(mixed, 0, 1), InvalidArgument);
  CHECK_THROWS_AS(generate_candidates(mixed, 3, 0), InvalidArgument);
}

TEST_CASE("generate_candidates agrees with the brute-force oracle on random corpora") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> docs(1 + rng.below(12));
    for (auto& d : docs) d = random_phrase_text(rng);
    const std::size_t max_len = 1 + rng.below(14);
    const std::uint64_t min_occur = 1 + rng.below(3);
    const auto cands = generate_candidates(docs, max_len, min_occur);
    const auto oracle = oracle_candidates(docs, max_len, min_occur);
    REQUIRE(cands.size() == oracle.size());
    for (const auto& c : cands) {
      REQUIRE(oracle.contains(c.text));
      CHECK(oracle.at(c.text) == c.occurrences);
      CHECK(text::char_count(c.text) <= max_len);
    }
  }
}

TEST_CASE("tokenize picks the longest match and falls back to bytes") {
  const std::vector<std::string> learned = {"ab", "ab ab"};
  const auto v = Vocabulary::from_tokens(learned);
  const auto ids = v.tokenize("ab ab");
  REQUIRE(ids.size() == 1);
  CHECK(v.token(ids[0]) == "ab ab");
  CHECK(v.tokenize("").empty());

  const std::vector<std::string> iowa = {"des moines iowa", "des", "moines"};
  const auto vi = Vocabulary::from_tokens(iowa);
  const auto ii = vi.tokenize("des moines iowa");
  REQUIRE(ii.size() == 1);
  CHECK(vi.token(ii[0]) == "des moines iowa");

  const Vocabulary bytes_only;
  const std::string omega = "\xCE\xA9";
  const auto oi = bytes_only.tokenize(omega);
  CHECK(oi == std::vector<TokenId>{Vocabulary::byte_token(0xCE), Vocabulary::byte_token(0xA9)});
  CHECK(bytes_only.detokenize(oi) == omega);
}

TEST_CASE("detokenize") {
  const Vocabulary v;
  CHECK(v.detokenize(std::vector<TokenId>{}).empty());
  const std::vector<TokenId> bad = {static_cast<TokenId>(v.size())};
  CHECK_THROWS_AS(v.detokenize(bad), InvalidArgument);
  const std::vector<std::string> learned = {"red apple"};
  const auto va = Vocabulary::from_tokens(learned);
  CHECK(va.detokenize(va.tokenize("red apple")) == "red apple");
}

TEST_CASE("from_tokens rejects duplicates and empty strings") {
  const std::vector<std::string> dup = {"ab", "ab"};
  CHECK_THROWS_AS(Vocabulary::from_tokens(dup), InvalidArgument);
  const std::vector<std::string> clash = {"a"};
  CHECK_THROWS_AS(Vocabulary::from_tokens(clash), InvalidArgument);
  const std::vector<std::string> empty = {""};
  CHECK_THROWS_AS(Vocabulary::from_tokens(empty), InvalidArgument);
}

TEST_CASE("properties: roundtrip, minimality and compression monotonicity") {
  Rng rng(3);
  const std::vector<std::string> pool = {"re", "red", "ed a", "apple", "red apple", "pp", "ca",
                                         "car", "les", "moines", "iowa", "des moines", "\xCE\xA9x",
                                         " a", "ple c", "2024", "0"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> small, large;
    for (const auto& t : pool) {
      if (t.size() == 1) continue;
      const bool in_small = rng.below(3) == 0;
      if (in_small) small.push_back(t);
      if (in_small || rng.below(2) == 0) large.push_back(t);
    }
    const auto v1 = Vocabulary::from_tokens(small);
    const auto v2 = Vocabulary::from_tokens(large);
    std::string s = random_phrase_text(rng);
    if (rng.below(5) == 0) s.push_back(static_cast<char>(0x80 + rng.below(64)));
    const auto t1 = v1.tokenize(s);
    const auto t2 = v2.tokenize(s);
    CHECK(v1.detokenize(t1) == s);
    CHECK(v2.detokenize(t2) == s);
    CHECK(t2.size() <= t1.size());
    CHECK(t1.size() == oracle_min_tokens(v1, s));
    CHECK(t2.size() == oracle_min_tokens(v2, s));
  }
}

TEST_CASE("build_vocabulary: phrase docids dominate the scores") {
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back("red apple");
  for (int i = 0; i < 50; ++i) corpus.push_back("red car");
  const auto cands = generate_candidates(corpus, 16, 1);
  VocabularyBuildReport report;
  const auto v = build_vocabulary(cands, corpus, 260, &report);
  REQUIRE(v.size() == 260);
  CHECK(report.iterations > 0);
  CHECK(v.token(257) == "red apple");
  CHECK(v.score(257) == 9 * 50);
  CHECK(v.token(258) == "red car");
  CHECK(v.score(258) == 7 * 50);
  CHECK(v.score(259) == 0);
}

TEST_CASE("build_vocabulary: identity when the pool already fits") {
  const std::vector<std::string> corpus = {"red apple", "red car"};
  const auto cands = generate_candidates(corpus, 16, 1);
  std::size_t pool = 0;
  for (const auto& c : cands) pool += c.text.size() > 1 ? 1 : 0;
  VocabularyBuildReport report;
  const auto v = build_vocabulary(cands, corpus, Vocabulary::kReservedCount + pool, &report);
  CHECK(report.iterations == 0);
  CHECK(!report.pool_exhausted);
  CHECK(v.size() == Vocabulary::kReservedCount + pool);

  const auto bigger = build_vocabulary(cands, corpus, Vocabulary::kReservedCount + pool + 10, &report);
  CHECK(report.pool_exhausted);
  CHECK(report.actual_size == bigger.size());
  CHECK(bigger.size() == Vocabulary::kReservedCount + pool);
}

TEST_CASE("build_vocabulary: single docid keeps the whole string") {
  const std::vector<std::string> corpus = {"abc"};
  const auto cands = generate_candidates(corpus, 8, 1);
  const auto v = build_vocabulary(cands, corpus, 259);
  REQUIRE(v.size() == 259);
  const auto id = v.find("abc");
  REQUIRE(id.has_value());
  CHECK(v.score(*id) == 3);
  CHECK(v.tokenize("abc").size() == 1);
  CHECK_THROWS_AS(build_vocabulary(cands, corpus, 200), InvalidArgument);
}

TEST_CASE("build_vocabulary is deterministic and its scores match a recount") {
  Rng rng(5);
  std::vector<std::string> corpus(300);
  for (auto& d : corpus) d = random_phrase_text(rng);
  const auto cands = generate_candidates(corpus, 20, 3);
  const auto a = build_vocabulary(cands, corpus, 300);
  const auto b = build_vocabulary(cands, corpus, 300);
  CHECK(a.serialize() == b.serialize());
  const auto recount = a.coverage(corpus);
  for (TokenId id = 0; id < a.size(); ++id) CHECK(a.score(id) == recount[id]);
}

TEST_CASE("vocabulary file roundtrip and corruption") {
  const std::vector<std::string> learned = {"tab\there", "new\nline", "back\\slash", "\xCE\xA9"};
  const std::vector<std::uint64_t> scores = {4, 3, 2, 1};
  const auto v = Vocabulary::from_tokens(learned, scores);
  const std::string file = v.serialize();
  CHECK(file.starts_with("#pixar-vocab v1 size=261\n"));
  const auto back = Vocabulary::parse(file, "mem");
  CHECK(back == v);
  CHECK(back.content_hash() == v.content_hash());
  CHECK(back.serialize() == file);

  std::string flipped = file;
  flipped[flipped.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(Vocabulary::parse(flipped, "mem"), CorruptArtifact);
  CHECK_THROWS_AS(Vocabulary::parse(file.substr(0, file.size() / 2), "mem"), CorruptArtifact);
}
