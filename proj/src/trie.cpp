#include "pixar/trie.hpp"

#include <algorithm>

#include "pixar/binary_io.hpp"

namespace pixar {

namespace {
constexpr std::array<char, 4> kMagic = {'P', 'I', 'X', 'T'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

DocidTrie::DocidTrie() : nodes_(1) {}

DocidTrie DocidTrie::build(std::span<const std::string> docids, const Vocabulary& vocab) {
  std::vector<std::string> unique(docids.begin(), docids.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  std::vector<std::vector<TokenId>> seqs;
  seqs.reserve(unique.size());
  for (const auto& d : unique) {
    if (d.empty()) throw InvalidArgument("empty docid");
    seqs.push_back(vocab.tokenize(d));
  }
  return from_sequences(unique, seqs, vocab.content_hash());
}

DocidTrie DocidTrie::from_sequences(std::span<const std::string> docids,
                                    std::span<const std::vector<TokenId>> sequences,
                                    std::uint64_t vocab_hash) {
  if (docids.size() != sequences.size()) throw InvalidArgument("docid/sequence count mismatch");
  DocidTrie trie;
  trie.vocab_hash_ = vocab_hash;
  trie.docids_.assign(docids.begin(), docids.end());
  {
    std::vector<std::string> sorted = trie.docids_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidArgument("duplicate docid");
    }
  }
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].empty()) throw InvalidArgument("docid '" + docids[i] + "' has no tokens");
    trie.insert(sequences[i], i);
  }
  trie.renumber_preorder();
  return trie;
}

void DocidTrie::insert(std::span<const TokenId> sequence, std::size_t docid) {
  std::uint32_t node = 0;
  for (TokenId tok : sequence) {
    auto& kids = nodes_[node].children;
    auto it = std::lower_bound(kids.begin(), kids.end(), tok,
                               [](const auto& e, TokenId t) { return e.first < t; });
    if (it != kids.end() && it->first == tok) {
      node = it->second;
    } else {
      const auto child = static_cast<std::uint32_t>(nodes_.size());
      kids.insert(it, {tok, child});
      nodes_.emplace_back();
      node = child;
    }
  }
  if (nodes_[node].docid != kNoDocid) {
    throw InvalidArgument("docids '" + docids_[static_cast<std::size_t>(nodes_[node].docid)] +
                          "' and '" + docids_[docid] + "' share a token sequence");
  }
  nodes_[node].docid = static_cast<std::int64_t>(docid);
  max_depth_ = std::max(max_depth_, sequence.size());
}

void DocidTrie::renumber_preorder() {
  std::vector<Node> ordered;
  ordered.reserve(nodes_.size());
  // (old index, slot in `ordered` whose child pointer must be patched)
  std::vector<std::pair<std::uint32_t, std::pair<std::size_t, std::size_t>>> stack;
  stack.push_back({0, {SIZE_MAX, 0}});
  while (!stack.empty()) {
    const auto [old, parent] = stack.back();
    stack.pop_back();
    const auto idx = static_cast<std::uint32_t>(ordered.size());
    if (parent.first != SIZE_MAX) ordered[parent.first].children[parent.second].second = idx;
    ordered.push_back(nodes_[old]);
    const auto& kids = nodes_[old].children;
    for (std::size_t c = kids.size(); c-- > 0;) stack.push_back({kids[c].second, {idx, c}});
  }
  nodes_ = std::move(ordered);
}

std::optional<std::size_t> DocidTrie::find(std::span<const TokenId> sequence) const {
  std::uint32_t node = 0;
  for (TokenId tok : sequence) {
    const auto& kids = nodes_[node].children;
    auto it = std::lower_bound(kids.begin(), kids.end(), tok,
                               [](const auto& e, TokenId t) { return e.first < t; });
    if (it == kids.end() || it->first != tok) return std::nullopt;
    node = it->second;
  }
  if (nodes_[node].docid == kNoDocid) return std::nullopt;
  return static_cast<std::size_t>(nodes_[node].docid);
}

std::vector<std::vector<TokenId>> DocidTrie::sequences() const {
  std::vector<std::vector<TokenId>> out(docids_.size());
  std::vector<std::pair<std::uint32_t, std::vector<TokenId>>> stack = {{0, {}}};
  while (!stack.empty()) {
    auto [node, prefix] = std::move(stack.back());
    stack.pop_back();
    if (nodes_[node].docid != kNoDocid) out[static_cast<std::size_t>(nodes_[node].docid)] = prefix;
    for (const auto& [tok, child] : nodes_[node].children) {
      auto next = prefix;
      next.push_back(tok);
      stack.emplace_back(child, std::move(next));
    }
  }
  return out;
}

bool operator==(const DocidTrie& a, const DocidTrie& b) {
  if (a.docids_ != b.docids_ || a.vocab_hash_ != b.vocab_hash_ ||
      a.nodes_.size() != b.nodes_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    if (a.nodes_[i].children != b.nodes_[i].children || a.nodes_[i].docid != b.nodes_[i].docid) {
      return false;
    }
  }
  return true;
}

// Layout: "PIXT", u32 version, u64 vocab_hash, varint docid count, each docid
// as varint length + bytes, varint node count, then nodes in preorder:
// varint (docid index + 1, 0 = none), varint child count, and per child its
// varint token id followed by the child's subtree. u64 checksum trailer.
std::vector<std::uint8_t> DocidTrie::serialize() const {
  io::ByteWriter w(kMagic, kVersion);
  w.u64(vocab_hash_);
  w.varint(docids_.size());
  for (const auto& d : docids_) w.str(d);
  w.varint(nodes_.size());
  // Explicit stack of (node, next child position).
  std::vector<std::pair<std::uint32_t, std::size_t>> stack = {{0, 0}};
  w.varint(static_cast<std::uint64_t>(nodes_[0].docid + 1));
  w.varint(nodes_[0].children.size());
  while (!stack.empty()) {
    auto& [node, pos] = stack.back();
    if (pos == nodes_[node].children.size()) {
      stack.pop_back();
      continue;
    }
    const auto [tok, child] = nodes_[node].children[pos++];
    w.varint(tok);
    w.varint(static_cast<std::uint64_t>(nodes_[child].docid + 1));
    w.varint(nodes_[child].children.size());
    stack.emplace_back(child, 0);
  }
  return std::move(w).finish();
}

DocidTrie DocidTrie::deserialize(std::vector<std::uint8_t> image, const std::string& source) {
  io::ByteReader r(std::move(image), kMagic, kVersion, source);
  DocidTrie trie;
  trie.vocab_hash_ = r.u64();
  const std::uint64_t n_docids = r.varint();
  if (n_docids > (1ull << 40)) r.fail("implausible docid count");
  for (std::uint64_t i = 0; i < n_docids; ++i) trie.docids_.push_back(r.str());
  const std::uint64_t n_nodes = r.varint();
  if (n_nodes < 1 || n_nodes > (1ull << 40)) r.fail("implausible node count");
  std::vector<bool> seen(trie.docids_.size(), false);
  auto read_node = [&](std::uint32_t idx) -> std::uint64_t {
    const std::uint64_t ref = r.varint();
    if (ref > 0) {
      if (ref > trie.docids_.size() || seen[ref - 1]) r.fail("bad terminal reference");
      seen[ref - 1] = true;
      trie.nodes_[idx].docid = static_cast<std::int64_t>(ref - 1);
    }
    return r.varint();
  };
  trie.nodes_.assign(1, Node{});
  // (node, children still to read, depth)
  std::vector<std::tuple<std::uint32_t, std::uint64_t, std::size_t>> stack;
  stack.emplace_back(0, read_node(0), 0);
  while (!stack.empty()) {
    auto& [node, remaining, depth] = stack.back();
    if (remaining == 0) {
      stack.pop_back();
      continue;
    }
    --remaining;
    const auto tok = r.varint();
    if (tok > UINT32_MAX) r.fail("token id overflow");
    if (trie.nodes_.size() >= n_nodes) r.fail("more nodes than declared");
    const auto child = static_cast<std::uint32_t>(trie.nodes_.size());
    auto& kids = trie.nodes_[node].children;
    if (!kids.empty() && kids.back().first >= tok) r.fail("children out of order");
    kids.emplace_back(static_cast<TokenId>(tok), child);
    trie.nodes_.emplace_back();
    const std::size_t child_depth = depth + 1;
    trie.max_depth_ = std::max(trie.max_depth_, child_depth);
    const std::uint64_t n_children = read_node(child);
    stack.emplace_back(child, n_children, child_depth);
  }
  if (trie.nodes_.size() != n_nodes) r.fail("node count mismatch");
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) r.fail("unreachable docid");
  for (std::size_t i = 1; i < trie.nodes_.size(); ++i) {
    if (trie.nodes_[i].children.empty() && trie.nodes_[i].docid == kNoDocid) {
      r.fail("leaf without docid");
    }
  }
  r.expect_end();
  return trie;
}

void DocidTrie::save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

DocidTrie DocidTrie::load(const std::filesystem::path& path) {
  return deserialize(io::read_file(path), path.string());
}

}  // namespace pixar
