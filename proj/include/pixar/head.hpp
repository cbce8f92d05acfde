#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "pixar/model.hpp"
#include "pixar/vocabulary.hpp"

namespace pixar {

/// Logits are clamped to this range before exponentiating unnormalized scores.
inline constexpr double kLogitClamp = 60.0;

/// Docid token ids extended with PAD to exactly s positions.
struct TargetSequence {
  std::vector<TokenId> ids;
};

/// Throws InvalidArgument if the docid needs more than `output_len` tokens.
TargetSequence make_target(const Vocabulary& vocab, std::string_view docid, std::size_t output_len);

/// Softmax of x . w_v over every token, max-subtracted.
Eigen::VectorXd position_distribution(const Eigen::Ref<const RowVector>& x,
                                      const Matrix& token_vectors);

/// exp(clamp(x . w)).
double unnormalized_score(const Eigen::Ref<const RowVector>& x,
                          const Eigen::Ref<const RowVector>& w);

/// log sum_v exp(x . w_v).
double log_partition(const Eigen::Ref<const RowVector>& x, const Matrix& token_vectors);

struct LossWeights {
  double position = 1.0;   // l1
  double shortlist = 0.25; // lambda2 * l2
  double selfnorm = 1.0;   // lambda3 * l3
  /// Drop PAD target positions from every term.
  bool mask_pad = false;
};

/// Unweighted sums over the batch.
struct LossTerms {
  double position_ce = 0.0;  // l1
  double shortlist_ce = 0.0; // l2
  double selfnorm = 0.0;     // l3, sum of log^2 Z_t
  std::size_t positions = 0; // number of (i, t) terms that contributed

  double total(const LossWeights& w) const {
    return w.position * position_ce + w.shortlist * shortlist_ce + w.selfnorm * selfnorm;
  }
};

/// Optional outputs of head_loss: gradients of total(weights).
struct HeadGradients {
  Matrix token_vectors;           // accumulated, |V| x d
  std::vector<Matrix> encodings;  // one (s+1) x d per example, overwritten
};

/// All three loss terms in one pass; the gradient is of
/// weights.position*l1 + weights.shortlist*l2 + weights.selfnorm*l3.
LossTerms head_loss(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                    std::span<const TargetSequence> targets, const LossWeights& weights,
                    HeadGradients* grads = nullptr);

double loss_position_ce(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                        std::span<const TargetSequence> targets);
double loss_shortlist_ce(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                         std::span<const TargetSequence> targets);
double loss_selfnorm(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                     std::span<const TargetSequence> targets);
double total_loss(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                  std::span<const TargetSequence> targets, double lambda2 = 0.25,
                  double lambda3 = 1.0);

}  // namespace pixar
