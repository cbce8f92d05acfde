#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "pixar/decoder.hpp"
#include "pixar/rng.hpp"

using namespace pixar;

namespace {

struct Instance {
  std::vector<std::string> docids;
  std::vector<std::vector<TokenId>> seqs;
  DocidTrie trie;
};

Instance random_instance(Rng& rng, std::size_t vocab, std::size_t n, std::size_t max_len) {
  Instance inst;
  std::set<std::vector<TokenId>> used;
  std::size_t possible = 0;
  for (std::size_t len = 1, span = vocab; len <= max_len && possible < n; ++len, span *= vocab) {
    possible += span;
  }
  n = std::min(n, possible);
  while (inst.seqs.size() < n) {
    std::vector<TokenId> seq(1 + rng.below(max_len));
    for (auto& t : seq) t = static_cast<TokenId>(rng.below(vocab));
    if (!used.insert(seq).second) continue;
    inst.docids.push_back("d" + std::to_string(inst.seqs.size()));
    inst.seqs.push_back(seq);
  }
  inst.trie = DocidTrie::from_sequences(inst.docids, inst.seqs, 7);
  return inst;
}

// Each list keeps a random subset of the vocabulary with random scores.
std::vector<std::vector<ScoredToken>> random_lists(Rng& rng, std::size_t vocab, std::size_t depth,
                                                   double keep) {
  std::vector<std::vector<ScoredToken>> lists(depth);
  for (auto& l : lists) {
    for (std::size_t v = 0; v < vocab; ++v) {
      if (rng.uniform() < keep) l.push_back({static_cast<TokenId>(v), -3.0 * rng.uniform()});
    }
  }
  return lists;
}

// Scores every docid independently: sum of per-depth scores, or nothing if a
// token is missing from its list or the docid is longer than the lists.
std::vector<ScoredDocid> brute_force(const Instance& inst,
                                     const std::vector<std::vector<ScoredToken>>& lists,
                                     std::size_t top_n) {
  std::vector<ScoredDocid> all;
  for (std::size_t i = 0; i < inst.seqs.size(); ++i) {
    if (inst.seqs[i].size() > lists.size()) continue;
    double score = 0;
    bool ok = true;
    for (std::size_t t = 0; t < inst.seqs[i].size() && ok; ++t) {
      ok = false;
      for (const auto& c : lists[t]) {
        if (c.token == inst.seqs[i][t]) {
          score += c.score;
          ok = true;
        }
      }
    }
    if (ok) all.push_back({inst.docids[i], score});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.docid < b.docid;
  });
  if (all.size() > top_n) all.resize(top_n);
  return all;
}

ModelConfig small_config(std::size_t vocab, std::size_t s) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.hidden_dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.ffn_dim = 16;
  c.output_len = s;
  c.input_buckets = 64;
  c.max_query_tokens = 8;
  return c;
}

}  // namespace

TEST_CASE("trie structure") {
  const Vocabulary v;
  const std::vector<std::string> docids = {"ab", "abc", "b", "ab"};
  const auto trie = DocidTrie::build(docids, v);
  REQUIRE(trie.docids().size() == 3);
  CHECK(trie.docids()[0] == "ab");
  CHECK(trie.docids()[1] == "abc");
  CHECK(trie.docids()[2] == "b");
  CHECK(trie.node_count() == 5);  // root, a, ab, abc, b
  CHECK(trie.max_depth() == 3);
  CHECK(trie.find(v.tokenize("ab")) == 0u);
  CHECK(trie.find(v.tokenize("abc")) == 1u);
  CHECK(!trie.find(v.tokenize("a")).has_value());
  CHECK(!trie.find(v.tokenize("c")).has_value());
  const auto seqs = trie.sequences();
  CHECK(seqs[1] == v.tokenize("abc"));
  // "ab" is an interior terminal
  const auto& a = trie.node(trie.node(0).children[0].second);
  const auto& ab = trie.node(a.children[0].second);
  CHECK(ab.docid == 0);
  CHECK(ab.children.size() == 1);

  const std::vector<std::string> with_empty = {"x", ""};
  CHECK_THROWS_AS(DocidTrie::build(with_empty, v), InvalidArgument);
  const std::vector<std::string> two = {"p", "q"};
  const std::vector<std::vector<TokenId>> same = {{3, 4}, {3, 4}};
  CHECK_THROWS_AS(DocidTrie::from_sequences(two, same, 0), InvalidArgument);

  const DocidTrie empty = DocidTrie::build({}, v);
  CHECK(empty.node_count() == 1);
  CHECK(empty.docids().empty());
}

TEST_CASE("trie file roundtrip and corruption") {
  Rng rng(3);
  const auto inst = random_instance(rng, 30, 200, 5);
  const auto image = inst.trie.serialize();
  const auto back = DocidTrie::deserialize(image, "mem");
  CHECK(back == inst.trie);
  CHECK(back.max_depth() == inst.trie.max_depth());
  CHECK(back.sequences() == inst.seqs);

  auto flipped = image;
  flipped[image.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(DocidTrie::deserialize(flipped, "mem"), CorruptArtifact);
  auto cut = image;
  cut.resize(image.size() - 3);
  CHECK_THROWS_AS(DocidTrie::deserialize(cut, "mem"), CorruptArtifact);
  CHECK_THROWS_AS(DocidTrie::deserialize({}, "mem"), CorruptArtifact);
}

TEST_CASE("rerank_position orders, breaks ties and caps") {
  Matrix w(5, 2);
  w << 1, 0,   // 0: 2
      0, 1,    // 1: 1
      1, 0,    // 2: 2
      -1, 0,   // 3: -2
      100, 0;  // 4: 200 -> clamped
  RowVector x(2);
  x << 2, 1;
  const std::vector<TokenId> w0 = {0, 1, 2, 3, 4};
  const auto all = rerank_position(w0, x, w, 10);
  REQUIRE(all.size() == 5);
  CHECK(all[0].token == 4);
  CHECK(all[0].score == kLogitClamp);
  CHECK(all[1].token == 0);
  CHECK(all[2].token == 2);
  CHECK(all[3].token == 1);
  CHECK(all[4].token == 3);
  CHECK(all[4].score == -2.0);
  const auto capped = rerank_position(w0, x, w, 2);
  REQUIRE(capped.size() == 2);
  CHECK(capped[1].token == 0);
  const std::vector<TokenId> sub = {3, 1};
  const auto s = rerank_position(sub, x, w, 10);
  CHECK(s[0].token == 1);
  CHECK(s[1].token == 3);
}

TEST_CASE("beam search: forced path, early emission, ties and incompleteness") {
  const std::vector<std::string> one = {"only"};
  const std::vector<std::vector<TokenId>> seq = {{2, 5, 1}};
  const auto single = DocidTrie::from_sequences(one, seq, 0);
  const std::vector<std::vector<ScoredToken>> lists = {
      {{1, -0.1}, {2, -0.5}}, {{5, -0.25}}, {{0, -0.01}, {1, -1.0}}};
  auto r = beam_search(single, lists, 1, 1);
  REQUIRE(r.hits.size() == 1);
  CHECK(r.hits[0].docid == "only");
  CHECK(r.hits[0].score == doctest::Approx(-1.75));
  CHECK(!r.incomplete);

  // A depth-1 leaf that loses the beam slot is still emitted.
  const std::vector<std::string> names = {"leaf", "long"};
  const std::vector<std::vector<TokenId>> seqs = {{1}, {2, 3}};
  const auto trie = DocidTrie::from_sequences(names, seqs, 0);
  const std::vector<std::vector<ScoredToken>> l2 = {{{1, -2.0}, {2, -0.1}}, {{3, -0.1}}};
  r = beam_search(trie, l2, 1, 1);
  CHECK(r.hits[0].docid == "long");
  r = beam_search(trie, l2, 2, 2);
  REQUIRE(r.hits.size() == 2);
  CHECK(r.hits[1].docid == "leaf");
  CHECK(r.hits[1].score == doctest::Approx(-2.0));

  // Missing candidate prunes the branch; fewer results than asked for.
  const std::vector<std::vector<ScoredToken>> l3 = {{{1, -2.0}, {2, -0.1}}, {{4, -0.1}}};
  r = beam_search(trie, l3, 5, 5);
  REQUIRE(r.hits.size() == 1);
  CHECK(r.hits[0].docid == "leaf");
  CHECK(r.incomplete);

  // Equal scores fall back to docid order.
  const std::vector<std::string> tie_names = {"zeta", "alpha", "mid"};
  const std::vector<std::vector<TokenId>> tie_seqs = {{1}, {2}, {3}};
  const auto ties = DocidTrie::from_sequences(tie_names, tie_seqs, 0);
  const std::vector<std::vector<ScoredToken>> flat = {{{1, -1.0}, {2, -1.0}, {3, -1.0}}};
  r = beam_search(ties, flat, 3, 3);
  CHECK(r.hits[0].docid == "alpha");
  CHECK(r.hits[1].docid == "mid");
  CHECK(r.hits[2].docid == "zeta");

  // Depth is bounded by the number of positions.
  r = beam_search(single, std::span(lists).first(2), 1, 1);
  CHECK(r.hits.empty());
  CHECK(r.incomplete);
}

TEST_CASE("beam search with an unbounded beam equals exhaustive scoring") {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t vocab = 4 + rng.below(10);
    const auto inst = random_instance(rng, vocab, 1 + rng.below(60), 1 + rng.below(4));
    const auto lists = random_lists(rng, vocab, 1 + rng.below(5), 0.4 + 0.6 * rng.uniform());
    const std::size_t top_n = 1 + rng.below(20);
    const auto got = beam_search(inst.trie, lists, inst.trie.node_count(), top_n);
    const auto want = brute_force(inst, lists, top_n);
    REQUIRE(got.hits.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got.hits[i].docid == want[i].docid);
      CHECK(got.hits[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
    }
    CHECK(got.incomplete == (want.size() < top_n));
  }
}

TEST_CASE("beam search soundness and beam-width behaviour") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t vocab = 3 + rng.below(8);
    const std::size_t max_len = 1 + rng.below(4);
    const auto inst = random_instance(rng, vocab, 1 + rng.below(40), max_len);
    const auto lists = random_lists(rng, vocab, max_len, 0.7);
    const auto exhaustive = brute_force(inst, lists, inst.docids.size());
    std::map<std::string, double> oracle;
    for (const auto& h : exhaustive) oracle[h.docid] = h.score;

    double prev_top = -INFINITY;
    for (std::size_t beam = 1; beam <= 8; ++beam) {
      const auto r = beam_search(inst.trie, lists, beam, 1);
      // every result is a real docid, scored exactly as the oracle scores it
      for (const auto& h : r.hits) {
        REQUIRE(oracle.count(h.docid) == 1);
        CHECK(h.score == doctest::Approx(oracle[h.docid]).epsilon(1e-12));
      }
      if (!r.hits.empty()) {
        CHECK(r.hits[0].score <= exhaustive[0].score + 1e-12);
        // With at most two tokens per docid the beams are nested, so the best
        // score cannot drop as the beam grows.
        if (inst.trie.max_depth() <= 2) CHECK(r.hits[0].score >= prev_top - 1e-12);
        prev_top = r.hits[0].score;
      }
    }
  }
}

TEST_CASE("decode: shortlist path agrees with the full softmax on equal-length docids") {
  Rng rng(21);
  const std::size_t vocab = 40;
  const std::size_t s = 3;
  const auto c = small_config(vocab, s);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParams p = ModelParams::initialize(c, 50 + static_cast<std::uint64_t>(trial));
    for (Eigen::Index i = 0; i < p.token_vectors.size(); ++i) p.token_vectors.data()[i] = rng.normal();
    p.vocab_hash = 7;
    // Every docid has exactly s tokens, so the per-depth log Z offsets are shared.
    Instance inst;
    std::set<std::vector<TokenId>> used;
    while (inst.seqs.size() < 80) {
      std::vector<TokenId> seq(s);
      for (auto& t : seq) t = static_cast<TokenId>(rng.below(vocab));
      if (!used.insert(seq).second) continue;
      inst.docids.push_back("doc" + std::to_string(inst.seqs.size()));
      inst.seqs.push_back(seq);
    }
    inst.trie = DocidTrie::from_sequences(inst.docids, inst.seqs, 7);

    Matrix centroids(2, c.hidden_dim);
    for (Eigen::Index i = 0; i < centroids.size(); ++i) centroids.data()[i] = rng.normal();
    const auto full_index = ShortlistIndex::build(centroids, p.token_vectors, vocab, 1, 7);
    DecodeOptions opts;
    opts.beam = inst.trie.node_count();
    opts.top_n = 80;
    opts.rerank_cap = vocab;
    const std::string query = "query " + std::to_string(trial);
    const auto a = decode(query, p, full_index, inst.trie, opts);
    const auto b = decode_full_softmax(query, p, inst.trie, opts);
    REQUIRE(a.hits.size() == 80);
    REQUIRE(b.hits.size() == 80);
    const double offset = a.hits[0].score - b.hits[0].score;
    for (std::size_t i = 0; i < 80; ++i) {
      CHECK(a.hits[i].docid == b.hits[i].docid);
      CHECK(a.hits[i].score - b.hits[i].score == doctest::Approx(offset).epsilon(1e-9));
    }

    // Shortlist candidates are always a subset of the full candidates.
    const auto enc = encode(p, query);
    const auto narrow = ShortlistIndex::build(centroids, p.token_vectors, 6, 1, 7);
    const auto sl = shortlist_candidates(enc, p.token_vectors, narrow, 4);
    const auto fl = full_softmax_candidates(enc, p.token_vectors);
    REQUIRE(sl.size() == fl.size());
    for (std::size_t t = 0; t < sl.size(); ++t) {
      CHECK(sl[t].size() == 4);
      CHECK(fl[t].size() == vocab);
      double z = 0;
      for (const auto& cand : fl[t]) z += std::exp(cand.score);
      CHECK(z == doctest::Approx(1.0).epsilon(1e-12));
      for (const auto& cand : sl[t]) {
        CHECK(std::binary_search(fl[t].begin(), fl[t].end(), cand,
                                 [](const auto& x, const auto& y) { return x.token < y.token; }));
      }
    }
  }
}

TEST_CASE("decode options and artifact compatibility") {
  DecodeOptions o;
  o.beam = 5;
  o.top_n = 10;
  CHECK_THROWS_AS(o.validate(), InvalidArgument);
  o.beam = 0;
  CHECK_THROWS_AS(o.validate(), InvalidArgument);
  o = DecodeOptions{};
  CHECK_NOTHROW(o.validate());

  const auto c = small_config(20, 2);
  auto p = ModelParams::initialize(c, 1);
  p.vocab_hash = 1;
  const std::vector<std::string> names = {"a"};
  const std::vector<std::vector<TokenId>> seqs = {{3}};
  const auto trie = DocidTrie::from_sequences(names, seqs, 2);
  CHECK_THROWS_AS(check_compatible(p, nullptr, trie), IncompatibleArtifacts);
  const auto ok_trie = DocidTrie::from_sequences(names, seqs, 1);
  CHECK_NOTHROW(check_compatible(p, nullptr, ok_trie));
  const auto index = ShortlistIndex::build(Matrix::Zero(1, 8), p.token_vectors, 3, 1, 9);
  CHECK_THROWS_AS(check_compatible(p, &index, ok_trie), IncompatibleArtifacts);
}
