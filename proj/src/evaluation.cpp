#include "pixar/evaluation.hpp"

#include <sys/utsname.h>

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "pixar/binary_io.hpp"
#include "pixar/error.hpp"
#include "pixar/text.hpp"

namespace pixar {

namespace {

void check_k(int k) {
  if (k <= 0) throw InvalidArgument("metric cutoff k must be positive, got " + std::to_string(k));
}

void check_unique(std::span<const std::string> ranked) {
  std::unordered_set<std::string_view> seen;
  for (const auto& d : ranked) {
    if (!seen.insert(d).second) throw InvalidArgument("duplicate docid in results: " + d);
  }
}

// Relevant results within the top k; `first` gets the 0-based rank of the first, or -1.
std::size_t overlap(std::span<const std::string> ranked, std::span<const std::string> gold,
                    int k, std::ptrdiff_t* first) {
  check_k(k);
  check_unique(ranked);
  const std::unordered_set<std::string_view> g(gold.begin(), gold.end());
  const std::size_t n = std::min(ranked.size(), static_cast<std::size_t>(k));
  std::size_t count = 0;
  if (first) *first = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (g.count(ranked[i])) {
      if (count == 0 && first) *first = static_cast<std::ptrdiff_t>(i);
      ++count;
    }
  }
  return count;
}

template <class F>
double average(std::span<const std::vector<std::string>> results,
               std::span<const std::vector<std::string>> gold, int k, F metric) {
  check_k(k);
  if (results.size() != gold.size()) throw InvalidArgument("results/gold count mismatch");
  if (results.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) sum += metric(results[i], gold[i], k);
  return sum / static_cast<double>(results.size());
}

double nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

}  // namespace

EvalSet parse_evalset(std::string_view text, const std::string& source) {
  EvalSet set;
  std::size_t line_no = 0;
  for (const auto& line : text::split(text, '\n')) {
    ++line_no;
    std::string_view l = line;
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (l.empty()) continue;
    const auto fields = text::split(l, '\t');
    auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
    if (fields.size() != 2) throw InvalidArgument(where() + "expected query<TAB>docids");
    Judgment j;
    try {
      j.query = text::unescape(fields[0]);
      for (const auto& d : text::split(fields[1], '|')) {
        if (!d.empty()) j.relevant.push_back(text::unescape(d));
      }
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where() + e.what());
    }
    if (j.relevant.empty()) throw InvalidArgument(where() + "no relevant docids");
    set.push_back(std::move(j));
  }
  return set;
}

EvalSet load_evalset(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse_evalset(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                       path.string());
}

std::string format_evalset(const EvalSet& set) {
  std::string out;
  for (const auto& j : set) {
    out += text::escape(j.query);
    out += '\t';
    for (std::size_t i = 0; i < j.relevant.size(); ++i) {
      if (i) out += '|';
      // '|' inside a docid would split it; escape it as a byte.
      std::string e = text::escape(j.relevant[i]);
      std::string safe;
      for (char c : e) safe += c == '|' ? std::string("\\x7c") : std::string(1, c);
      out += safe;
    }
    out += '\n';
  }
  return out;
}

void validate_evalset(const EvalSet& set, std::span<const std::string> docids) {
  const std::unordered_set<std::string_view> known(docids.begin(), docids.end());
  for (const auto& j : set) {
    if (j.relevant.empty()) throw InvalidArgument("query '" + j.query + "' has no relevant docids");
    for (const auto& d : j.relevant) {
      if (!known.count(d)) {
        throw InvalidArgument("gold docid '" + d + "' for query '" + j.query +
                              "' is not in the corpus");
      }
    }
  }
}

double reciprocal_rank_at(std::span<const std::string> ranked, std::span<const std::string> gold,
                          int k) {
  std::ptrdiff_t first = -1;
  overlap(ranked, gold, k, &first);
  return first < 0 ? 0.0 : 1.0 / static_cast<double>(first + 1);
}

double recall_at(std::span<const std::string> ranked, std::span<const std::string> gold, int k) {
  const auto n = overlap(ranked, gold, k, nullptr);
  const std::unordered_set<std::string_view> g(gold.begin(), gold.end());
  return g.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(g.size());
}

double hits_at(std::span<const std::string> ranked, std::span<const std::string> gold, int k) {
  return overlap(ranked, gold, k, nullptr) > 0 ? 1.0 : 0.0;
}

double precision_at(std::span<const std::string> ranked, std::span<const std::string> gold,
                    int k) {
  return static_cast<double>(overlap(ranked, gold, k, nullptr)) / static_cast<double>(k);
}

double mrr_at_k(std::span<const std::vector<std::string>> results,
                std::span<const std::vector<std::string>> gold, int k) {
  return average(results, gold, k, [](const auto& r, const auto& g, int kk) {
    return reciprocal_rank_at(r, g, kk);
  });
}

double recall_at_k(std::span<const std::vector<std::string>> results,
                   std::span<const std::vector<std::string>> gold, int k) {
  return average(results, gold, k,
                 [](const auto& r, const auto& g, int kk) { return recall_at(r, g, kk); });
}

double hits_at_k(std::span<const std::vector<std::string>> results,
                 std::span<const std::vector<std::string>> gold, int k) {
  return average(results, gold, k,
                 [](const auto& r, const auto& g, int kk) { return hits_at(r, g, kk); });
}

double precision_at_k(std::span<const std::vector<std::string>> results,
                      std::span<const std::vector<std::string>> gold, int k) {
  return average(results, gold, k,
                 [](const auto& r, const auto& g, int kk) { return precision_at(r, g, kk); });
}

std::map<std::string, std::string> environment_metadata() {
  std::map<std::string, std::string> env;
#if defined(__clang__)
  env["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  env["compiler"] = "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__) +
                    "." + std::to_string(__GNUC_PATCHLEVEL__);
#else
  env["compiler"] = "unknown";
#endif
#ifdef NDEBUG
  env["build"] = "release";
#else
  env["build"] = "debug";
#endif
  env["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                 "." + std::to_string(EIGEN_MINOR_VERSION);
  env["hardware_threads"] = std::to_string(std::thread::hardware_concurrency());
  utsname u{};
  if (uname(&u) == 0) {
    env["os"] = std::string(u.sysname) + " " + u.release;
    env["machine"] = u.machine;
  }
  env["batch_size"] = "1";
  return env;
}

LatencyStats bench_latency(const std::function<void(std::string_view)>& pipeline,
                           std::span<const std::string> queries, std::size_t warmup) {
  if (queries.empty()) throw InvalidArgument("bench needs at least one query");
  LatencyStats stats;
  stats.warmup = warmup;
  for (std::size_t i = 0; i < warmup; ++i) pipeline(queries[i % queries.size()]);
  std::vector<double> ms;
  ms.reserve(queries.size());
  for (const auto& q : queries) {
    const auto start = std::chrono::steady_clock::now();
    pipeline(q);
    const auto stop = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  stats.queries = ms.size();
  double sum = 0.0;
  for (double v : ms) sum += v;
  stats.mean_ms = sum / static_cast<double>(ms.size());
  stats.p99_ms = nearest_rank(ms, 0.99);
  stats.low_confidence = ms.size() < 100;
  stats.environment = environment_metadata();
  return stats;
}

LengthStats sequence_length_report(std::span<const std::string> docids, const Vocabulary& vocab) {
  LengthStats stats;
  stats.docids = docids.size();
  if (docids.empty()) return stats;
  std::vector<double> counts;
  counts.reserve(docids.size());
  double sum = 0.0;
  for (const auto& d : docids) {
    counts.push_back(static_cast<double>(vocab.tokenize(d).size()));
    sum += counts.back();
  }
  stats.mean = sum / static_cast<double>(counts.size());
  stats.p99 = nearest_rank(std::move(counts), 0.99);
  return stats;
}

MetricsReport evaluate_rankings(std::span<const std::vector<std::string>> results,
                                std::span<const std::vector<std::string>> gold,
                                std::span<const int> ks) {
  MetricsReport report;
  report.queries = results.size();
  for (int k : ks) {
    const auto suffix = "@" + std::to_string(k);
    report.metrics["mrr" + suffix] = mrr_at_k(results, gold, k);
    report.metrics["recall" + suffix] = recall_at_k(results, gold, k);
    report.metrics["hits" + suffix] = hits_at_k(results, gold, k);
    report.metrics["precision" + suffix] = precision_at_k(results, gold, k);
  }
  return report;
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "queries: " << queries << "\n";
  for (const auto& [name, value] : metrics) os << std::left << std::setw(16) << name << value << "\n";
  if (has_latency) {
    os << std::setprecision(3);
    os << std::left << std::setw(16) << "latency mean" << latency.mean_ms << " ms\n";
    os << std::left << std::setw(16) << "latency p99" << latency.p99_ms << " ms"
       << (latency.low_confidence ? " (low confidence, < 100 queries)" : "") << "\n";
  }
  return os.str();
}

std::string MetricsReport::records() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "queries=" << queries << "\n";
  for (const auto& [name, value] : metrics) os << name << "=" << value << "\n";
  if (has_latency) {
    os << "latency_mean_ms=" << latency.mean_ms << "\n";
    os << "latency_p99_ms=" << latency.p99_ms << "\n";
    os << "latency_queries=" << latency.queries << "\n";
    os << "latency_low_confidence=" << (latency.low_confidence ? 1 : 0) << "\n";
    for (const auto& [k, v] : latency.environment) os << "env_" << k << "=" << v << "\n";
  }
  return os.str();
}

}  // namespace pixar
