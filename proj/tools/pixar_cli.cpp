// Command-line front end: one subcommand per pipeline stage.

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "pixar/binary_io.hpp"
#include "pixar/config.hpp"
#include "pixar/corpus.hpp"
#include "pixar/decoder.hpp"
#include "pixar/evaluation.hpp"
#include "pixar/text.hpp"
#include "pixar/trie.hpp"
#include "pixar/vocabulary.hpp"

namespace {

using namespace pixar;

void log(std::string_view msg) { std::cerr << msg << "\n"; }

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void check_vocab_hash(std::uint64_t artifact_hash, const char* what, const Vocabulary& vocab) {
  if (artifact_hash != vocab.content_hash()) {
    throw IncompatibleArtifacts(std::string(what) + " was built for vocabulary " +
                                hex(artifact_hash) + " but the vocabulary file hashes to " +
                                hex(vocab.content_hash()));
  }
}

std::vector<std::string> read_queries(const RunConfig& cfg, const std::vector<std::string>& inline_queries) {
  if (!inline_queries.empty()) return inline_queries;
  if (!cfg.queries.empty()) return load_docids(cfg.queries);
  if (!cfg.evalset.empty()) {
    std::vector<std::string> out;
    for (const auto& j : load_evalset(cfg.evalset)) out.push_back(j.query);
    return out;
  }
  throw InvalidArgument("no queries: pass --text, or set queries or evalset");
}

void write_or_print(const RunConfig& cfg, const std::string& text) {
  if (cfg.output.empty()) {
    std::cout << text;
  } else {
    io::write_file(cfg.output, std::string_view(text));
    log("wrote " + cfg.output);
  }
}

int build_vocab(const RunConfig& cfg) {
  const auto docids = load_docids(cfg.require_path("corpus"));
  const auto& out = cfg.require_path("vocab");
  const auto candidates = generate_candidates(docids, cfg.max_len, cfg.min_occur);
  log(std::to_string(candidates.size()) + " candidates from " + std::to_string(docids.size()) +
      " docids");
  VocabularyBuildReport report;
  const auto vocab = build_vocabulary(candidates, docids, cfg.vocab_size, &report);
  vocab.save(out);
  std::cout << "vocab_size=" << report.actual_size << "\n"
            << "requested_size=" << report.requested_size << "\n"
            << "iterations=" << report.iterations << "\n"
            << "pool_exhausted=" << (report.pool_exhausted ? 1 : 0) << "\n"
            << "vocab_hash=" << hex(vocab.content_hash()) << "\n";
  if (report.pool_exhausted) log("warning: candidate pool smaller than vocab_size; kept everything");
  return 0;
}

int tokenize(const RunConfig& cfg, const std::vector<std::string>& texts) {
  const auto vocab = Vocabulary::load(cfg.require_path("vocab"));
  const auto inputs = texts.empty() ? load_docids(cfg.require_path("corpus")) : texts;
  std::string out;
  std::size_t exact = 0;
  std::size_t tokens = 0;
  for (const auto& s : inputs) {
    const auto ids = vocab.tokenize(s);
    tokens += ids.size();
    if (vocab.detokenize(ids) == s) ++exact;
    out += text::escape(s);
    out += '\t';
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(ids[i]);
    }
    out += '\n';
  }
  write_or_print(cfg, out);
  std::cerr << "roundtrip_exact=" << exact << "/" << inputs.size() << " tokens=" << tokens << "\n";
  return exact == inputs.size() ? 0 : 1;
}

int train_model(const RunConfig& cfg) {
  const auto seed = cfg.require_seed("train");
  const auto vocab = Vocabulary::load(cfg.require_path("vocab"));
  const auto pairs = load_pairs(cfg.require_path("pairs"));
  const auto& out = cfg.require_path("model");
  std::vector<std::string> docids;
  if (!cfg.corpus.empty()) {
    docids = load_docids(cfg.corpus);
  } else {
    for (const auto& p : pairs) docids.push_back(p.docid);
  }
  const std::size_t s = cfg.output_len ? cfg.output_len : output_len_for(vocab, unique_docids(docids));
  auto params = ModelParams::initialize(cfg.model_config(vocab.size(), s), seed);
  params.vocab_hash = vocab.content_hash();
  const auto examples = make_examples(vocab, params.config, pairs);
  log("training on " + std::to_string(examples.size()) + " pairs, s=" + std::to_string(s) +
      ", |V|=" + std::to_string(vocab.size()));
  auto tc = cfg.train_config();
  tc.seed = seed;
  params = train(std::move(params), examples, tc, [](const EpochStats& e) {
    std::ostringstream os;
    os << "epoch " << e.epoch << " loss=" << e.mean_loss << " l1=" << e.terms.position_ce
       << " l2=" << e.terms.shortlist_ce << " mean_log2_z=" << e.mean_log2_partition;
    log(os.str());
  });
  params.save(out);
  log("wrote " + out);
  return 0;
}

int build_trie(const RunConfig& cfg) {
  const auto vocab = Vocabulary::load(cfg.require_path("vocab"));
  const auto docids = load_docids(cfg.require_path("corpus"));
  const auto& out = cfg.require_path("trie");
  const auto trie = DocidTrie::build(docids, vocab);
  trie.save(out);
  std::cout << "docids=" << trie.docids().size() << "\n"
            << "nodes=" << trie.node_count() << "\n"
            << "max_depth=" << trie.max_depth() << "\n";
  return 0;
}

int train_clusters(const RunConfig& cfg) {
  const auto seed = cfg.require_seed("train-clusters");
  const auto vocab = Vocabulary::load(cfg.require_path("vocab"));
  const auto params = ModelParams::load(cfg.require_path("model"));
  check_vocab_hash(params.vocab_hash, "model", vocab);
  const auto pairs = load_pairs(cfg.require_path("pairs"));
  const auto& out = cfg.require_path("index");
  const auto examples = make_examples(vocab, params.config, pairs);
  auto sc = cfg.shortlist_config();
  sc.seed = seed;
  const auto index = train_centroids(params, examples, sc, log);
  index.save(out);
  std::cout << "clusters=" << index.clusters() << "\n"
            << "set_size=" << index.set_size() << "\n"
            << "probe=" << index.probe() << "\n";
  return 0;
}

struct Searcher {
  ModelParams params;
  DocidTrie trie;
  ShortlistIndex index;
  bool full_softmax = false;
  DecodeOptions options;

  Searcher(const RunConfig& cfg, bool full) : full_softmax(full), options(cfg.decode_options()) {
    params = ModelParams::load(cfg.require_path("model"));
    trie = DocidTrie::load(cfg.require_path("trie"));
    if (!full) {
      index = ShortlistIndex::load(cfg.require_path("index"));
      if (cfg.probe != index.probe()) index = index.with_probe(cfg.probe);
    }
    check_compatible(params, full ? nullptr : &index, trie);
    if (!cfg.vocab.empty()) check_vocab_hash(params.vocab_hash, "model", Vocabulary::load(cfg.vocab));
  }

  RankedResult run(std::string_view q) const {
    return full_softmax ? decode_full_softmax(q, params, trie, options)
                        : decode(q, params, index, trie, options);
  }
};

int query(const RunConfig& cfg, const std::vector<std::string>& texts, bool full) {
  const Searcher searcher(cfg, full);
  std::ostringstream os;
  os << std::setprecision(8);
  for (const auto& q : read_queries(cfg, texts)) {
    const auto r = searcher.run(q);
    os << "# " << text::escape(q);
    if (r.incomplete) os << "\t(incomplete: " << r.hits.size() << " results)";
    if (r.query_truncated) os << "\t(query truncated)";
    os << "\n";
    for (std::size_t i = 0; i < r.hits.size(); ++i) {
      os << i + 1 << '\t' << r.hits[i].score << '\t' << text::escape(r.hits[i].docid) << "\n";
    }
  }
  write_or_print(cfg, os.str());
  return 0;
}

int eval(const RunConfig& cfg, bool full) {
  const Searcher searcher(cfg, full);
  const auto set = load_evalset(cfg.require_path("evalset"));
  validate_evalset(set, searcher.trie.docids());
  std::vector<std::vector<std::string>> results;
  std::vector<std::vector<std::string>> gold;
  for (const auto& j : set) {
    std::vector<std::string> ranked;
    for (auto& h : searcher.run(j.query).hits) ranked.push_back(std::move(h.docid));
    results.push_back(std::move(ranked));
    gold.push_back(j.relevant);
  }
  const auto ks = cfg.metric_cutoffs();
  const auto report = evaluate_rankings(results, gold, ks);
  std::cout << report.table();
  if (cfg.output.empty()) {
    std::cout << "\n" << report.records();
  } else {
    io::write_file(cfg.output, std::string_view(report.records()));
  }
  return 0;
}

int bench(const RunConfig& cfg, const std::vector<std::string>& texts, bool full, bool compare) {
  const auto queries = read_queries(cfg, texts);
  std::ostringstream records;
  records << std::setprecision(8);
  std::map<std::string, double> means;
  auto run = [&](bool use_full, const std::string& label) {
    const Searcher searcher(cfg, use_full);
    const auto stats = bench_latency([&](std::string_view q) { searcher.run(q); }, queries,
                                     cfg.bench_warmup);
    means[label] = stats.mean_ms;
    std::cout << std::fixed << std::setprecision(3) << label << ": mean " << stats.mean_ms
              << " ms, p99 " << stats.p99_ms << " ms over " << stats.queries << " queries"
              << (stats.low_confidence ? " (p99 low confidence, < 100 queries)" : "") << "\n";
    records << label << "_mean_ms=" << stats.mean_ms << "\n"
            << label << "_p99_ms=" << stats.p99_ms << "\n"
            << label << "_queries=" << stats.queries << "\n"
            << label << "_low_confidence=" << (stats.low_confidence ? 1 : 0) << "\n";
    return stats;
  };
  LatencyStats last;
  if (compare) {
    run(false, "shortlist");
    last = run(true, "full_softmax");
    const double ratio = means["shortlist"] / means["full_softmax"];
    std::cout << "shortlist/full ratio " << ratio << "\n";
    records << "latency_ratio=" << ratio << "\n";
  } else {
    last = run(full, full ? "full_softmax" : "shortlist");
  }
  records << "warmup=" << last.warmup << "\n";
  for (const auto& [k, v] : last.environment) records << "env_" << k << "=" << v << "\n";
  if (cfg.output.empty()) {
    std::cout << "\n" << records.str();
  } else {
    io::write_file(cfg.output, std::string_view(records.str()));
  }
  return 0;
}

int stats(const RunConfig& cfg) {
  bool any = false;
  std::optional<Vocabulary> vocab;
  std::optional<ModelParams> params;
  std::optional<DocidTrie> trie;
  std::optional<ShortlistIndex> index;
  if (!cfg.vocab.empty()) {
    vocab = Vocabulary::load(cfg.vocab);
    std::size_t learned = vocab->size() - Vocabulary::kReservedCount;
    std::cout << "vocab.size=" << vocab->size() << "\nvocab.learned=" << learned
              << "\nvocab.hash=" << hex(vocab->content_hash()) << "\n";
    any = true;
  }
  if (!cfg.corpus.empty() && vocab) {
    const auto docids = unique_docids(load_docids(cfg.corpus));
    const auto phrase = sequence_length_report(docids, *vocab);
    const auto chars = sequence_length_report(docids, Vocabulary());
    std::cout << "corpus.docids=" << docids.size() << "\ncorpus.mean_tokens=" << phrase.mean
              << "\ncorpus.p99_tokens=" << phrase.p99 << "\ncorpus.mean_tokens_charlevel="
              << chars.mean << "\ncorpus.p99_tokens_charlevel=" << chars.p99 << "\n";
    if (chars.mean > 0) std::cout << "corpus.compression_ratio=" << phrase.mean / chars.mean << "\n";
  }
  if (!cfg.model.empty()) {
    params = ModelParams::load(cfg.model);
    const auto& c = params->config;
    std::cout << "model.vocab_size=" << c.vocab_size << "\nmodel.hidden_dim=" << c.hidden_dim
              << "\nmodel.layers=" << c.layers << "\nmodel.heads=" << c.heads
              << "\nmodel.output_len=" << c.output_len << "\nmodel.vocab_hash="
              << hex(params->vocab_hash) << "\n";
    if (vocab) check_vocab_hash(params->vocab_hash, "model", *vocab);
    any = true;
  }
  if (!cfg.index.empty()) {
    index = ShortlistIndex::load(cfg.index);
    std::cout << "index.clusters=" << index->clusters() << "\nindex.set_size=" << index->set_size()
              << "\nindex.probe=" << index->probe() << "\nindex.vocab_hash="
              << hex(index->vocab_hash()) << "\n";
    if (vocab) check_vocab_hash(index->vocab_hash(), "index", *vocab);
    any = true;
  }
  if (!cfg.trie.empty()) {
    trie = DocidTrie::load(cfg.trie);
    std::cout << "trie.docids=" << trie->docids().size() << "\ntrie.nodes=" << trie->node_count()
              << "\ntrie.max_depth=" << trie->max_depth() << "\ntrie.vocab_hash="
              << hex(trie->vocab_hash()) << "\n";
    if (vocab) check_vocab_hash(trie->vocab_hash(), "trie", *vocab);
    any = true;
  }
  if (params && trie) check_compatible(*params, index ? &*index : nullptr, *trie);
  if (!any) throw InvalidArgument("stats needs at least one of vocab, model, index, trie");
  return 0;
}

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (char& c : out) {
    if (c == '_') c = '-';
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-autoregressive generative retrieval: vocabulary, training, shortlist and decoding."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show every subcommand's options");

  std::string config_path;
  app.add_option("-c,--config", config_path, "key=value config file; flags override it")
      ->check(CLI::ExistingFile);
  std::map<std::string, std::string> overrides;
  for (const auto& key : RunConfig::keys()) {
    app.add_option("--" + flag_name(key.name), overrides[key.name], key.help)->group("Config keys");
  }

  std::vector<std::string> texts;
  bool full = false;
  bool compare = false;

  auto* c_vocab = app.add_subcommand("build-vocab", "Build a phrase vocabulary from the corpus");
  auto* c_tok = app.add_subcommand("tokenize", "Tokenize docids or text and check the roundtrip");
  c_tok->add_option("--text", texts, "Text to tokenize instead of the corpus");
  auto* c_train = app.add_subcommand("train", "Train the encoder on query/docid pairs");
  auto* c_trie = app.add_subcommand("build-trie", "Build the docid trie");
  auto* c_clusters = app.add_subcommand("train-clusters", "Train shortlist centroids");
  auto* c_query = app.add_subcommand("query", "Retrieve docids for queries");
  c_query->add_option("--text", texts, "Query text (repeatable)");
  c_query->add_flag("--full-softmax", full, "Score the whole vocabulary instead of the shortlist");
  auto* c_eval = app.add_subcommand("eval", "Compute retrieval metrics on an evaluation set");
  c_eval->add_flag("--full-softmax", full, "Score the whole vocabulary instead of the shortlist");
  auto* c_bench = app.add_subcommand("bench", "Measure per-query decode latency");
  c_bench->add_option("--text", texts, "Query text (repeatable)");
  c_bench->add_flag("--full-softmax", full, "Benchmark the full-vocabulary path");
  c_bench->add_flag("--compare", compare, "Benchmark both paths and report the ratio");
  auto* c_stats = app.add_subcommand("stats", "Describe artifacts and check they fit together");
  for (auto* sub : {c_vocab, c_tok, c_train, c_trie, c_clusters, c_query, c_eval, c_bench, c_stats}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto& key : RunConfig::keys()) {
      if (app.count("--" + flag_name(key.name)) > 0) cfg.set(key.name, overrides[key.name]);
    }
    cfg.validate();

    if (*c_vocab) return build_vocab(cfg);
    if (*c_tok) return tokenize(cfg, texts);
    if (*c_train) return train_model(cfg);
    if (*c_trie) return build_trie(cfg);
    if (*c_clusters) return train_clusters(cfg);
    if (*c_query) return query(cfg, texts, full);
    if (*c_eval) return eval(cfg, full);
    if (*c_bench) return bench(cfg, texts, full, compare);
    if (*c_stats) return stats(cfg);
  } catch (const pixar::Error& e) {
    std::cerr << "pixar: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pixar: error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
