#include "fmhca/metrics.hpp"

#include "fmhca/dataset.hpp"

namespace fmhca {

void ConfusionMatrix::add(int true_label, int predicted_label) {
  ++counts[label_to_index(true_label)][label_to_index(predicted_label)];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts)
    for (auto v : row) n += v;
  return n;
}

std::uint64_t ConfusionMatrix::correct() const {
  std::uint64_t n = 0;
  for (std::size_t c = 0; c < 3; ++c) n += counts[c][c];
  return n;
}

MetricsReport compute_metrics(const ConfusionMatrix& confusion) {
  MetricsReport report;
  report.confusion = confusion;
  const auto total = confusion.total();
  if (total == 0) return report;
  const auto n = static_cast<double>(total);

  for (std::size_t c = 0; c < 3; ++c) {
    std::uint64_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      predicted += confusion.counts[k][c];
      actual += confusion.counts[c][k];
    }
    const auto tp = static_cast<double>(confusion.counts[c][c]);
    report.support[c] = actual;
    report.precision[c] = predicted ? tp / static_cast<double>(predicted) : 0.0;
    report.recall[c] = actual ? tp / static_cast<double>(actual) : 0.0;
    const double pr = report.precision[c] + report.recall[c];
    report.f1[c] = pr > 0.0 ? 2.0 * report.precision[c] * report.recall[c] / pr : 0.0;
  }

  report.accuracy = static_cast<double>(confusion.correct()) / n;
  double wp = 0.0, wf = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto s = static_cast<double>(report.support[c]);
    wp += s * report.precision[c];
    wf += s * report.f1[c];
  }
  report.weighted_precision = wp / n;
  report.weighted_f1 = wf / n;
  // support_c * tp_c / support_c collapses to tp_c, so the support-weighted
  // recall is the trace over the total: the accuracy itself.
  report.weighted_recall = report.accuracy;
  return report;
}

}  // namespace fmhca
