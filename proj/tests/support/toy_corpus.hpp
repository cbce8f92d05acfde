#pragma once

// Synthetic topical corpus. Each topic owns a set of pseudo-words built from
// syllables; a docid is one of the topic's head phrases followed by modifier
// words, so phrases recur across docids. Queries are shuffled word subsets.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "pixar/evaluation.hpp"
#include "pixar/rng.hpp"
#include "pixar/trainer.hpp"

namespace pixar::testing {

struct ToyCorpusSpec {
  std::size_t topics = 8;
  std::size_t docs_per_topic = 25;
  std::size_t words_per_topic = 12;
  std::size_t heads_per_topic = 3;
  std::size_t train_queries_per_doc = 3;
  std::uint64_t seed = 1;
};

struct ToyCorpus {
  std::vector<std::string> docids;
  std::vector<std::size_t> topic_of;  // parallel to docids
  std::vector<QueryDocPair> train;
  EvalSet heldout;
};

inline std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

inline ToyCorpus make_toy_corpus(const ToyCorpusSpec& spec) {
  static const char* consonants[] = {"k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "d",
                                     "b", "g", "h", "f", "j", "w", "y", "ch", "sh", "th"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  Rng rng(spec.seed);
  std::set<std::string> used_words;
  auto new_word = [&] {
    for (;;) {
      std::string w;
      const std::size_t syllables = 2 + rng.below(2);
      for (std::size_t i = 0; i < syllables; ++i) {
        w += consonants[rng.below(std::size(consonants))];
        w += vowels[rng.below(std::size(vowels))];
      }
      if (used_words.insert(w).second) return w;
    }
  };

  ToyCorpus corpus;
  std::set<std::string> used_docids;
  for (std::size_t t = 0; t < spec.topics; ++t) {
    std::vector<std::string> words(spec.words_per_topic);
    for (auto& w : words) w = new_word();
    std::vector<std::vector<std::string>> heads(spec.heads_per_topic);
    for (auto& h : heads) h = {new_word(), new_word()};
    std::size_t made = 0;
    while (made < spec.docs_per_topic) {
      std::vector<std::string> doc = heads[rng.below(heads.size())];
      std::vector<std::string> pool = words;
      rng.shuffle(std::span(pool));
      const std::size_t mods = 1 + rng.below(2);
      doc.insert(doc.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(mods));
      const auto id = join_words(doc);
      if (!used_docids.insert(id).second) continue;
      ++made;
      corpus.docids.push_back(id);
      corpus.topic_of.push_back(t);

      // Training queries: the modifiers plus a random part of the head,
      // sometimes with a stray topic word.
      std::vector<std::string> mod_words(doc.begin() + 2, doc.end());
      for (std::size_t q = 0; q < spec.train_queries_per_doc; ++q) {
        std::vector<std::string> qw = mod_words;
        for (std::size_t i = 0; i < 2; ++i) {
          if (rng.uniform() < 0.6) qw.push_back(doc[i]);
        }
        if (rng.uniform() < 0.3) qw.push_back(words[rng.below(words.size())]);
        rng.shuffle(std::span(qw));
        corpus.train.push_back({join_words(qw), id});
      }
      // Held-out query: every docid word, reversed, plus a stray topic word.
      std::vector<std::string> hw(doc.rbegin(), doc.rend());
      hw.push_back(words[rng.below(words.size())]);
      corpus.heldout.push_back({join_words(hw), {id}});
    }
  }
  return corpus;
}

}  // namespace pixar::testing
