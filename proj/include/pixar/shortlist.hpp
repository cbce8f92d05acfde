#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "pixar/head.hpp"
#include "pixar/model.hpp"
#include "pixar/trainer.hpp"

namespace pixar {

struct ShortlistConfig {
  std::size_t clusters = 4096;   // m
  std::size_t set_size = 20000;  // r
  std::size_t probe = 5;         // k
  std::size_t epochs = 20;       // hard-assignment rounds
  std::size_t steps_per_epoch = 10;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  bool mask_pad = false;

  void validate(std::size_t vocab_size) const;
};

/// Softmax of c . w_v over the vocabulary.
Eigen::VectorXd centroid_distribution(const Eigen::Ref<const RowVector>& centroid,
                                      const Matrix& token_vectors);

/// The r tokens with the largest c . w_v, ties to the smaller id, in that order.
std::vector<TokenId> top_tokens(const Eigen::Ref<const RowVector>& centroid,
                                const Matrix& token_vectors, std::size_t r);

/// Centroids c_1..c_m with their materialized top-r token sets W_1..W_m.
/// Immutable after construction.
class ShortlistIndex {
 public:
  ShortlistIndex() = default;

  /// Materializes every W_i from the current token vectors.
  static ShortlistIndex build(Matrix centroids, const Matrix& token_vectors, std::size_t set_size,
                              std::size_t probe, std::uint64_t vocab_hash);

  std::size_t clusters() const { return static_cast<std::size_t>(centroids_.rows()); }
  std::size_t set_size() const { return set_size_; }
  std::size_t probe() const { return probe_; }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(centroids_.cols()); }
  std::uint64_t vocab_hash() const { return vocab_hash_; }
  const Matrix& centroids() const { return centroids_; }
  std::span<const TokenId> set(std::size_t i) const;

  /// Same index with a different number of probed centroids.
  ShortlistIndex with_probe(std::size_t probe) const;

  /// argmax_j <x0, c_j>, ties to the smallest index.
  std::size_t assign(const Eigen::Ref<const RowVector>& x0) const;
  /// The `count` centroids with the largest inner product, best first.
  std::vector<std::size_t> top_centroids(const Eigen::Ref<const RowVector>& x0,
                                         std::size_t count) const;
  /// W_0: union of the sets of the top-k centroids, ascending and deduplicated.
  std::vector<TokenId> shortlist(const Eigen::Ref<const RowVector>& x0) const;

  std::vector<std::uint8_t> serialize() const;
  static ShortlistIndex deserialize(std::vector<std::uint8_t> image, const std::string& source);
  void save(const std::filesystem::path& path) const;
  static ShortlistIndex load(const std::filesystem::path& path);

  friend bool operator==(const ShortlistIndex&, const ShortlistIndex&) = default;

 private:
  Matrix centroids_;
  std::vector<TokenId> sets_;  // m x r, row-major
  std::size_t set_size_ = 0;
  std::size_t probe_ = 0;
  std::uint64_t vocab_hash_ = 0;
};

/// l' = -sum_i sum_t log P_{c_{e_i}}(d_i^t) with e_i = argmax_j <x0_i, c_j>.
/// `grad` (optional) receives dl'/dc with the assignments held fixed.
double centroid_loss(const Matrix& centroids, const Matrix& token_vectors,
                     const Matrix& shortlist_embeddings, std::span<const TargetSequence> targets,
                     bool mask_pad, Matrix* grad = nullptr);

using LogFn = std::function<void(std::string_view)>;

/// k-means++ seeding over the x0 rows, then alternating hard assignment and
/// Adam steps on l'. Token vectors stay frozen. Empty clusters are reseeded
/// from a random x0 row.
ShortlistIndex train_centroids(const Matrix& shortlist_embeddings,
                               std::span<const TargetSequence> targets,
                               const Matrix& token_vectors, const ShortlistConfig& config,
                               std::uint64_t vocab_hash, const LogFn& log = {});

/// Encodes every training query with frozen params, then trains as above.
ShortlistIndex train_centroids(const ModelParams& params,
                               std::span<const TrainingExample> examples,
                               const ShortlistConfig& config, const LogFn& log = {});

}  // namespace pixar
