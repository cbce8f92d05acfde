#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pixar/error.hpp"

namespace pixar {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  /// s: number of output positions (x_1..x_s); x_0 is produced in addition.
  std::size_t output_len = 0;
  std::size_t input_buckets = 4096;
  std::size_t max_query_tokens = 32;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncoderBlock {
  Matrix ln1_gain, ln1_bias;
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln2_gain, ln2_bias;
  Matrix w1, b1, w2, b2;
};

/// All trainable state. Linear layers are stored input-major (y = x W + b).
struct ModelParams {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;

  Matrix input_embedding;     // (1 + input_buckets) x d, row 0 is [CLS]
  Matrix slot_embedding;      // s x d
  Matrix position_embedding;  // (1 + max_query_tokens + s) x d
  std::vector<EncoderBlock> blocks;
  Matrix final_ln_gain, final_ln_bias;
  Matrix output_weight, output_bias;
  Matrix token_vectors;  // |V| x d, row u is w_u

  /// Every tensor is zero (LayerNorm gains included).
  static ModelParams zeros(const ModelConfig& config);
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  /// Tensors in serialization order.
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  static std::vector<std::string> tensor_names(const ModelConfig& config);

  std::vector<std::uint8_t> serialize() const;
  static ModelParams deserialize(std::vector<std::uint8_t> image, const std::string& source);
  void save(const std::filesystem::path& path) const;
  static ModelParams load(const std::filesystem::path& path);

  bool all_finite() const;
  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// Query side segmentation: ASCII-lowercased words split on whitespace, each
/// punctuation character its own word, words hashed into input buckets.
struct InputTokens {
  std::vector<std::uint32_t> buckets;  // each in [1, input_buckets]
  bool truncated = false;
};

InputTokens tokenize_query(std::string_view query, const ModelConfig& config);

/// x_0 (shortlist embedding) followed by x_1..x_s, one row each.
struct QueryEncoding {
  Matrix vectors;  // (s + 1) x d
  bool truncated = false;

  std::size_t output_len() const { return static_cast<std::size_t>(vectors.rows()) - 1; }
  auto shortlist_embedding() const { return vectors.row(0); }
  auto position(std::size_t t) const { return vectors.row(static_cast<Eigen::Index>(t)); }
};

/// Activations kept for the backward pass.
struct EncoderCache {
  struct LayerNormState {
    Matrix normalized;
    Eigen::VectorXd inv_std;
  };
  struct Block {
    Matrix input;
    LayerNormState ln1;
    Matrix attn_in, q, k, v;
    std::vector<Matrix> probs;  // per head, n x n
    Matrix attn_out;            // heads concatenated, before wo
    Matrix mid;                 // residual stream after attention
    LayerNormState ln2;
    Matrix ffn_in, pre_act, act;
  };
  std::vector<std::uint32_t> rows;  // embedding row per input position
  std::vector<Block> blocks;
  Matrix final_in;
  LayerNormState final_ln;
  Matrix final_out;
  std::vector<Eigen::Index> output_rows;
};

QueryEncoding encode(const ModelParams& params, std::string_view query);
QueryEncoding encode_tokens(const ModelParams& params, const InputTokens& input,
                            EncoderCache* cache = nullptr);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(encoding).
/// token_vectors gradients are not touched here.
void encode_backward(const ModelParams& params, const EncoderCache& cache,
                     const Matrix& d_encoding, ModelParams& grads);

}  // namespace pixar
