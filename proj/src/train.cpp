#include "fmhca/train.hpp"

#include <chrono>
#include <cmath>

namespace fmhca {

template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels,
                             std::span<const T> class_weights) {
  std::vector<std::size_t> targets;
  targets.reserve(labels.size());
  for (int label : labels) targets.push_back(label_to_index(label));
  return ops::cross_entropy(logits, std::span<const std::size_t>(targets), class_weights);
}

namespace {

template <typename T>
std::vector<T> inverse_frequency_weights(std::span<const OpinionPairSample> data) {
  std::array<double, kNumClasses> counts{};
  for (const auto& s : data) counts[label_to_index(s.label)] += 1.0;
  std::vector<T> weights(kNumClasses, T(0));
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (counts[c] > 0) weights[c] = static_cast<T>(static_cast<double>(data.size()) / (kNumClasses * counts[c]));
  return weights;
}

}  // namespace

template <typename T>
double mean_loss(const ParameterSet<T>& params, const ModelConfig& cfg,
                 std::span<const OpinionPairSample> data, std::size_t batch_size) {
  if (data.empty()) return 0.0;
  Rng unused(0);
  double total = 0.0;
  for (const auto& batch : make_batches(data, batch_size)) {
    auto trace = forward(params, cfg, batch, false, unused);
    total += static_cast<double>(cross_entropy_loss<T>(trace.logits, batch.labels).item()) *
             static_cast<double>(batch.size);
  }
  return total / static_cast<double>(data.size());
}

template <typename T>
MetricsReport evaluate(const ParameterSet<T>& params, const ModelConfig& cfg,
                       std::span<const OpinionPairSample> data, std::size_t batch_size) {
  ConfusionMatrix confusion;
  Rng unused(0);
  if (!data.empty()) {
    for (const auto& batch : make_batches(data, batch_size)) {
      auto trace = forward(params, cfg, batch, false, unused);
      const auto probs = trace.probabilities.values();
      for (std::size_t b = 0; b < batch.size; ++b)
        confusion.add(batch.labels[b], predict<T>(probs.subspan(b * kNumClasses, kNumClasses)));
    }
  }
  return compute_metrics(confusion);
}

template <typename T>
TrainResult<T> train(const ModelConfig& cfg, std::span<const OpinionPairSample> train_set,
                     std::span<const OpinionPairSample> val_set, const TrainOptions& options,
                     const EpochCallback& on_epoch) {
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  TrainResult<T> result{build_model<T>(cfg), {}};
  if (options.epochs == 0) return result;

  auto params = result.params.clone();
  AdamState<T> adam;
  adam.hyper.lr = options.lr;
  const std::vector<T> class_weights =
      options.class_weighted ? inverse_frequency_weights<T>(train_set) : std::vector<T>{};
  const Rng root(options.seed);
  Rng dropout_rng = root.fork(0);
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (const auto& batch : make_batches(train_set, options.batch_size, root.fork(epoch).next_u64())) {
      params.zero_grad();
      auto trace = forward(params, cfg, batch, true, dropout_rng);
      auto loss = cross_entropy_loss<T>(trace.logits, batch.labels, class_weights);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch));
      }
      loss_sum += value * static_cast<double>(batch.size);
      const auto grads = backward(std::move(loss), params);
      adam_step(params, grads, adam);
    }
    params.zero_grad();

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      record.val_loss = mean_loss(params, cfg, val_set, options.batch_size);
      record.val_accuracy = evaluate(params, cfg, val_set, options.batch_size).accuracy;
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.epochs.push_back(record);

    // Strict improvement keeps the earlier epoch on ties.
    if (!have_best || val_set.empty() || record.val_accuracy > result.history.best_val_accuracy) {
      have_best = true;
      result.history.best_epoch = epoch;
      result.history.best_val_accuracy = record.val_accuracy;
      result.params = params.clone();
    }
    if (on_epoch) on_epoch(record);
  }
  return result;
}

#define FMHCA_INSTANTIATE_TRAIN(T)                                                                 \
  template Tensor<T> cross_entropy_loss(const Tensor<T>&, std::span<const int>, std::span<const T>); \
  template TrainResult<T> train(const ModelConfig&, std::span<const OpinionPairSample>,            \
                                std::span<const OpinionPairSample>, const TrainOptions&,           \
                                const EpochCallback&);                                             \
  template MetricsReport evaluate(const ParameterSet<T>&, const ModelConfig&,                      \
                                  std::span<const OpinionPairSample>, std::size_t);                \
  template double mean_loss(const ParameterSet<T>&, const ModelConfig&,                            \
                            std::span<const OpinionPairSample>, std::size_t);

FMHCA_INSTANTIATE_TRAIN(float)
FMHCA_INSTANTIATE_TRAIN(double)

}  // namespace fmhca
