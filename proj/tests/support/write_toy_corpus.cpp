// Writes a toy corpus (docids, training pairs, evaluation set) for the CLI
// end-to-end test.

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "pixar/binary_io.hpp"
#include "pixar/corpus.hpp"
#include "support/toy_corpus.hpp"

int main(int argc, char** argv) {
  if (argc != 2 && argc != 6) {
    std::cerr << "usage: write_toy_corpus <dir> [topics docs_per_topic words_per_topic seed]\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  pixar::testing::ToyCorpusSpec spec;  // 8 topics x 25 docids = 200
  if (argc == 6) {
    spec.topics = std::strtoul(argv[2], nullptr, 10);
    spec.docs_per_topic = std::strtoul(argv[3], nullptr, 10);
    spec.words_per_topic = std::strtoul(argv[4], nullptr, 10);
    spec.seed = std::strtoull(argv[5], nullptr, 10);
  }
  const auto corpus = pixar::testing::make_toy_corpus(spec);
  pixar::io::write_file(dir / "docids.txt", std::string_view(pixar::format_lines(corpus.docids)));
  pixar::io::write_file(dir / "pairs.tsv", std::string_view(pixar::format_pairs(corpus.train)));
  pixar::io::write_file(dir / "eval.tsv", std::string_view(pixar::format_evalset(corpus.heldout)));
  return 0;
}
