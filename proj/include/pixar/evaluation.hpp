#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pixar/vocabulary.hpp"

namespace pixar {

/// One query with its gold docids.
struct Judgment {
  std::string query;
  std::vector<std::string> relevant;
};

using EvalSet = std::vector<Judgment>;

/// TSV lines `query<TAB>docid1|docid2|...`, fields escaped like the vocabulary
/// file. Blank lines are skipped.
EvalSet parse_evalset(std::string_view text, const std::string& source);
EvalSet load_evalset(const std::filesystem::path& path);
std::string format_evalset(const EvalSet& set);
/// Throws InvalidArgument on empty gold sets or gold docids outside `docids`.
void validate_evalset(const EvalSet& set, std::span<const std::string> docids);

// Per-query metrics. `ranked` must be free of duplicates; k must be positive.
double reciprocal_rank_at(std::span<const std::string> ranked,
                          std::span<const std::string> gold, int k);
double recall_at(std::span<const std::string> ranked, std::span<const std::string> gold, int k);
double hits_at(std::span<const std::string> ranked, std::span<const std::string> gold, int k);
double precision_at(std::span<const std::string> ranked, std::span<const std::string> gold,
                    int k);

// Averages over queries; results[i] is the ranking for gold[i].
double mrr_at_k(std::span<const std::vector<std::string>> results,
                std::span<const std::vector<std::string>> gold, int k);
double recall_at_k(std::span<const std::vector<std::string>> results,
                   std::span<const std::vector<std::string>> gold, int k);
double hits_at_k(std::span<const std::vector<std::string>> results,
                 std::span<const std::vector<std::string>> gold, int k);
double precision_at_k(std::span<const std::vector<std::string>> results,
                      std::span<const std::vector<std::string>> gold, int k);

struct LatencyStats {
  double mean_ms = 0.0;
  double p99_ms = 0.0;
  std::size_t queries = 0;
  std::size_t warmup = 0;
  /// Under 100 timed queries the p99 is a poor estimate.
  bool low_confidence = false;
  std::map<std::string, std::string> environment;
};

/// Times `pipeline` once per query at batch size 1 after `warmup` untimed
/// calls (cycling through the queries). p99 uses the nearest-rank method.
LatencyStats bench_latency(const std::function<void(std::string_view)>& pipeline,
                           std::span<const std::string> queries, std::size_t warmup = 10);

/// Compiler, build type, core count and host.
std::map<std::string, std::string> environment_metadata();

struct LengthStats {
  double mean = 0.0;
  double p99 = 0.0;
  std::size_t docids = 0;
};

/// Token counts of tokenize(docid) over the corpus.
LengthStats sequence_length_report(std::span<const std::string> docids, const Vocabulary& vocab);

struct MetricsReport {
  std::size_t queries = 0;
  /// Keys like "mrr@10", "recall@5", "hits@20", "precision@100".
  std::map<std::string, double> metrics;
  bool has_latency = false;
  LatencyStats latency;

  std::string table() const;
  /// One `key=value` line per metric.
  std::string records() const;
};

MetricsReport evaluate_rankings(std::span<const std::vector<std::string>> results,
                                std::span<const std::vector<std::string>> gold,
                                std::span<const int> ks);

}  // namespace pixar
