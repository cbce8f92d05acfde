#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pixar/head.hpp"
#include "pixar/model.hpp"
#include "pixar/vocabulary.hpp"

namespace pixar {

struct TrainingExample {
  InputTokens input;
  TargetSequence target;
};

struct QueryDocPair {
  std::string query;
  std::string docid;
};

/// s for a docid set: the longest tokenized docid.
std::size_t output_len_for(const Vocabulary& vocab, std::span<const std::string> docids);

std::vector<TrainingExample> make_examples(const Vocabulary& vocab, const ModelConfig& config,
                                           std::span<const QueryDocPair> pairs);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t warmup_steps = 50;
  std::uint64_t seed = 0;
  LossWeights weights;
};

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t examples = 0;
  LossTerms terms;          // summed over the epoch, measured before each update
  double mean_loss = 0.0;   // weighted total / examples
  double mean_log2_partition = 0.0;  // l3 / contributing positions
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Loss terms and the gradient of the weighted total (summed, not averaged)
/// over `examples` with respect to every parameter.
LossTerms loss_and_gradient(const ModelParams& params, std::span<const TrainingExample> examples,
                            const LossWeights& weights, ModelParams* grads);

/// Forward-only evaluation.
LossTerms evaluate_loss(const ModelParams& params, std::span<const TrainingExample> examples,
                        const LossWeights& weights);

/// Adam with linear warmup then linear decay to zero. Batches are drawn
/// from a per-epoch shuffle seeded by `config.seed`; deterministic.
/// Throws TrainingDiverged if the loss stops being finite.
ModelParams train(ModelParams params, std::span<const TrainingExample> examples,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace pixar
