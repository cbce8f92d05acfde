#include "pixar/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pixar/rng.hpp"

namespace pixar {

std::size_t output_len_for(const Vocabulary& vocab, std::span<const std::string> docids) {
  std::size_t s = 1;
  for (const auto& d : docids) s = std::max(s, vocab.tokenize(d).size());
  return s;
}

std::vector<TrainingExample> make_examples(const Vocabulary& vocab, const ModelConfig& config,
                                           std::span<const QueryDocPair> pairs) {
  std::vector<TrainingExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({tokenize_query(p.query, config), make_target(vocab, p.docid, config.output_len)});
  }
  return out;
}

namespace {

LossTerms batch_pass(const ModelParams& params, std::span<const TrainingExample> examples,
                     const LossWeights& weights, ModelParams* grads) {
  std::vector<QueryEncoding> encodings;
  std::vector<TargetSequence> targets;
  std::vector<EncoderCache> caches(grads != nullptr ? examples.size() : 0);
  encodings.reserve(examples.size());
  targets.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    encodings.push_back(
        encode_tokens(params, examples[i].input, grads != nullptr ? &caches[i] : nullptr));
    targets.push_back(examples[i].target);
  }
  if (grads == nullptr) return head_loss(params.token_vectors, encodings, targets, weights);

  HeadGradients hg;
  hg.token_vectors = std::move(grads->token_vectors);
  const LossTerms terms = head_loss(params.token_vectors, encodings, targets, weights, &hg);
  grads->token_vectors = std::move(hg.token_vectors);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    encode_backward(params, caches[i], hg.encodings[i], *grads);
  }
  return terms;
}

}  // namespace

LossTerms loss_and_gradient(const ModelParams& params, std::span<const TrainingExample> examples,
                            const LossWeights& weights, ModelParams* grads) {
  if (grads != nullptr) {
    *grads = ModelParams::zeros(params.config);
    grads->vocab_hash = params.vocab_hash;
  }
  return batch_pass(params, examples, weights, grads);
}

LossTerms evaluate_loss(const ModelParams& params, std::span<const TrainingExample> examples,
                        const LossWeights& weights) {
  LossTerms sum;
  constexpr std::size_t kChunk = 256;
  for (std::size_t i = 0; i < examples.size(); i += kChunk) {
    const auto part = batch_pass(params, examples.subspan(i, std::min(kChunk, examples.size() - i)),
                                 weights, nullptr);
    sum.position_ce += part.position_ce;
    sum.shortlist_ce += part.shortlist_ce;
    sum.selfnorm += part.selfnorm;
    sum.positions += part.positions;
  }
  return sum;
}

ModelParams train(ModelParams params, std::span<const TrainingExample> examples,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  if (config.epochs == 0) return params;
  if (examples.empty()) throw InvalidArgument("training set is empty");
  if (config.batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (config.weights.shortlist < 0.0 || config.weights.selfnorm < 0.0) {
    throw InvalidArgument("loss weights must be >= 0");
  }

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ModelParams m1 = ModelParams::zeros(params.config);
  ModelParams m2 = ModelParams::zeros(params.config);
  auto p_t = params.tensors();
  auto m1_t = m1.tensors();
  auto m2_t = m2.tensors();

  const std::size_t steps_per_epoch = (examples.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const std::size_t warmup = std::min(config.warmup_steps, total_steps);
  Rng rng = Rng::stream(config.seed, "train-shuffle");
  std::vector<std::size_t> order(examples.size());
  std::vector<TrainingExample> batch;
  ModelParams grads;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    EpochStats stats;
    stats.epoch = epoch + 1;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);

      const LossTerms terms = loss_and_gradient(params, batch, config.weights, &grads);
      const double loss = terms.total(config.weights);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("loss is not finite at epoch " + std::to_string(epoch + 1) +
                               ", step " + std::to_string(step) + " (learning_rate=" +
                               std::to_string(config.learning_rate) +
                               "); retry with a smaller learning rate or more warmup");
      }
      stats.terms.position_ce += terms.position_ce;
      stats.terms.shortlist_ce += terms.shortlist_ce;
      stats.terms.selfnorm += terms.selfnorm;
      stats.terms.positions += terms.positions;
      stats.examples += batch.size();

      double lr = config.learning_rate;
      if (step < warmup) {
        lr *= static_cast<double>(step + 1) / static_cast<double>(warmup);
      } else if (total_steps > warmup) {
        lr *= static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
      }
      const double inv_batch = 1.0 / static_cast<double>(batch.size());
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step + 1));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step + 1));
      auto g_t = grads.tensors();
      for (std::size_t k = 0; k < p_t.size(); ++k) {
        auto g = g_t[k]->array() * inv_batch;
        m1_t[k]->array() = kBeta1 * m1_t[k]->array() + (1.0 - kBeta1) * g;
        m2_t[k]->array() = kBeta2 * m2_t[k]->array() + (1.0 - kBeta2) * g.square();
        p_t[k]->array() -=
            lr * (m1_t[k]->array() / c1) / ((m2_t[k]->array() / c2).sqrt() + kEps);
      }
    }
    stats.mean_loss = stats.terms.total(config.weights) / static_cast<double>(stats.examples);
    stats.mean_log2_partition =
        stats.terms.positions > 0 ? stats.terms.selfnorm / static_cast<double>(stats.terms.positions)
                                  : 0.0;
    if (on_epoch) on_epoch(stats);
  }
  return params;
}

}  // namespace pixar
