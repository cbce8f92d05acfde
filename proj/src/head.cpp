#include "pixar/head.hpp"

#include <algorithm>
#include <cmath>

namespace pixar {

TargetSequence make_target(const Vocabulary& vocab, std::string_view docid, std::size_t output_len) {
  TargetSequence t{vocab.tokenize(docid)};
  if (t.ids.size() > output_len) {
    throw InvalidArgument("docid '" + std::string(docid) + "' needs " +
                          std::to_string(t.ids.size()) + " tokens, output length is " +
                          std::to_string(output_len));
  }
  t.ids.resize(output_len, Vocabulary::kPad);
  return t;
}

Eigen::VectorXd position_distribution(const Eigen::Ref<const RowVector>& x,
                                      const Matrix& token_vectors) {
  Eigen::VectorXd logits = token_vectors * x.transpose();
  const double mx = logits.maxCoeff();
  logits = (logits.array() - mx).exp();
  return logits / logits.sum();
}

double unnormalized_score(const Eigen::Ref<const RowVector>& x,
                          const Eigen::Ref<const RowVector>& w) {
  return std::exp(std::clamp(x.dot(w), -kLogitClamp, kLogitClamp));
}

double log_partition(const Eigen::Ref<const RowVector>& x, const Matrix& token_vectors) {
  const Eigen::VectorXd logits = token_vectors * x.transpose();
  const double mx = logits.maxCoeff();
  return mx + std::log((logits.array() - mx).exp().sum());
}

LossTerms head_loss(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                    std::span<const TargetSequence> targets, const LossWeights& weights,
                    HeadGradients* grads) {
  if (encodings.size() != targets.size()) throw InvalidArgument("encodings/targets size mismatch");
  if (encodings.empty()) throw InvalidArgument("empty batch");
  const Eigen::Index d = token_vectors.cols();
  const Eigen::Index rows_per = encodings[0].vectors.rows();
  const Eigen::Index s = rows_per - 1;
  const auto batch = static_cast<Eigen::Index>(encodings.size());

  Matrix x(batch * rows_per, d);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto& enc = encodings[static_cast<std::size_t>(i)].vectors;
    if (enc.rows() != rows_per || enc.cols() != d) throw InvalidArgument("encoding shape mismatch");
    if (static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)].ids.size()) != s) {
      throw InvalidArgument("target length must equal output length");
    }
    x.middleRows(i * rows_per, rows_per) = enc;
  }

  // Rows become probabilities in place; logits kept only where needed.
  Matrix probs = x * token_vectors.transpose();
  LossTerms terms;
  Eigen::VectorXd log_z(probs.rows());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const double mx = probs.row(r).maxCoeff();
    probs.row(r) = (probs.row(r).array() - mx).exp();
    const double z = probs.row(r).sum();
    log_z(r) = mx + std::log(z);
    probs.row(r) /= z;
  }

  const bool want_grad = grads != nullptr;
  Matrix g;
  if (want_grad) g = Matrix::Zero(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto& ids = targets[static_cast<std::size_t>(i)].ids;
    const Eigen::Index r0 = i * rows_per;
    // log P(v) = logit(v) - log Z = log(prob(v)) computed stably from logits.
    double active = 0.0;
    for (Eigen::Index t = 1; t <= s; ++t) {
      const TokenId target = ids[static_cast<std::size_t>(t - 1)];
      if (weights.mask_pad && target == Vocabulary::kPad) continue;
      active += 1.0;
      ++terms.positions;
      const Eigen::Index r = r0 + t;
      const double logit_t = x.row(r).dot(token_vectors.row(target));
      const double logit_0 = x.row(r0).dot(token_vectors.row(target));
      terms.position_ce += log_z(r) - logit_t;
      terms.shortlist_ce += log_z(r0) - logit_0;
      terms.selfnorm += log_z(r) * log_z(r);
      if (want_grad) {
        g.row(r) += (weights.position + 2.0 * weights.selfnorm * log_z(r)) * probs.row(r);
        g(r, target) -= weights.position;
        g(r0, target) -= weights.shortlist;
      }
    }
    if (want_grad && active > 0.0) g.row(r0) += weights.shortlist * active * probs.row(r0);
  }

  if (want_grad) {
    if (grads->token_vectors.rows() != token_vectors.rows() ||
        grads->token_vectors.cols() != d) {
      grads->token_vectors = Matrix::Zero(token_vectors.rows(), d);
    }
    grads->token_vectors.noalias() += g.transpose() * x;
    const Matrix dx = g * token_vectors;
    grads->encodings.resize(encodings.size());
    for (Eigen::Index i = 0; i < batch; ++i) {
      grads->encodings[static_cast<std::size_t>(i)] = dx.middleRows(i * rows_per, rows_per);
    }
  }
  return terms;
}

double loss_position_ce(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                        std::span<const TargetSequence> targets) {
  return head_loss(token_vectors, encodings, targets, {}).position_ce;
}

double loss_shortlist_ce(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                         std::span<const TargetSequence> targets) {
  return head_loss(token_vectors, encodings, targets, {}).shortlist_ce;
}

double loss_selfnorm(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                     std::span<const TargetSequence> targets) {
  return head_loss(token_vectors, encodings, targets, {}).selfnorm;
}

double total_loss(const Matrix& token_vectors, std::span<const QueryEncoding> encodings,
                  std::span<const TargetSequence> targets, double lambda2, double lambda3) {
  if (lambda2 < 0.0 || lambda3 < 0.0) throw InvalidArgument("loss weights must be >= 0");
  LossWeights w;
  w.shortlist = lambda2;
  w.selfnorm = lambda3;
  return head_loss(token_vectors, encodings, targets, w).total(w);
}

}  // namespace pixar
