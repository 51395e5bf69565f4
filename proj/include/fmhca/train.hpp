#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fmhca/metrics.hpp"
#include "fmhca/model.hpp"
#include "fmhca/optim.hpp"

namespace fmhca {

// Mean -log softmax(logits)[label] over the batch; labels in {-1, 0, +1}.
template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels,
                             std::span<const T> class_weights = {});

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  bool class_weighted = false;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_val_accuracy = 0.0;
};

template <typename T>
struct TrainResult {
  ParameterSet<T> params;  // parameters of the best validation epoch
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam over shuffled mini-batches with dropout active. Aborts with
// NonFiniteLoss if a batch loss stops being finite.
template <typename T>
TrainResult<T> train(const ModelConfig& cfg, std::span<const OpinionPairSample> train_set,
                     std::span<const OpinionPairSample> val_set, const TrainOptions& options,
                     const EpochCallback& on_epoch = {});

// Eval-mode forward, argmax prediction, confusion matrix and metrics.
template <typename T>
MetricsReport evaluate(const ParameterSet<T>& params, const ModelConfig& cfg,
                       std::span<const OpinionPairSample> data, std::size_t batch_size = 16);

template <typename T>
double mean_loss(const ParameterSet<T>& params, const ModelConfig& cfg,
                 std::span<const OpinionPairSample> data, std::size_t batch_size = 16);

}  // namespace fmhca
