#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pixar/decoder.hpp"
#include "pixar/model.hpp"
#include "pixar/shortlist.hpp"
#include "pixar/trainer.hpp"

namespace pixar {

/// Everything a pipeline run needs. Read from a `key=value` file (`#` starts
/// a comment) and then overridden by command-line flags.
struct RunConfig {
  // artifact and data paths
  std::string corpus;   // one docid per line
  std::string pairs;    // query<TAB>docid
  std::string vocab;
  std::string model;
  std::string index;
  std::string trie;
  std::string evalset;
  std::string queries;  // one query per line
  std::string output;

  // vocabulary
  std::size_t vocab_size = 8000;
  std::size_t max_len = 32;
  std::size_t min_occur = 20;

  // encoder
  std::size_t hidden_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t output_len = 0;  // 0: longest tokenized docid
  std::size_t input_buckets = 4096;
  std::size_t max_query_tokens = 32;

  // training
  double lambda2 = 0.25;
  double lambda3 = 1.0;
  bool mask_pad = false;
  double learning_rate = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t warmup_steps = 50;

  // shortlist
  std::size_t clusters = 4096;
  std::size_t set_size = 20000;
  std::size_t probe = 5;
  std::size_t cluster_epochs = 20;
  std::size_t cluster_steps = 10;
  double cluster_learning_rate = 1e-2;

  // decoding and evaluation
  std::size_t beam = 100;
  std::size_t top_n = 100;
  std::size_t rerank_cap = 512;
  std::string metrics_k = "1,5,10,20,100";
  std::size_t bench_warmup = 10;

  std::optional<std::uint64_t> seed;

  struct Key {
    std::string name;
    std::string help;
  };
  /// Every accepted key with a one-line description.
  static const std::vector<Key>& keys();

  /// Throws InvalidArgument for an unknown key or a malformed value.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Parses `key=value` lines on top of the defaults.
  static RunConfig parse(std::string_view text, const std::string& source);
  static RunConfig load(const std::filesystem::path& path);
  /// All keys, one per line, in a form parse() accepts.
  std::string dump() const;

  /// Range checks that apply to every subcommand.
  void validate() const;
  /// Throws unless `path_key` names a non-empty path.
  const std::string& require_path(std::string_view path_key) const;
  std::uint64_t require_seed(std::string_view command) const;

  std::vector<int> metric_cutoffs() const;
  ModelConfig model_config(std::size_t vocab_size, std::size_t output_len) const;
  TrainConfig train_config() const;
  ShortlistConfig shortlist_config() const;
  DecodeOptions decode_options() const;
};

}  // namespace pixar
