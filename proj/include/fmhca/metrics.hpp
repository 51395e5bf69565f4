#pragma once

#include <array>
#include <cstdint>

namespace fmhca {

// Rows are true classes, columns predicted classes, both in index order
// (negative, neutral, positive).
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 3>, 3> counts{};

  void add(int true_label, int predicted_label);
  std::uint64_t total() const;
  std::uint64_t correct() const;
};

struct MetricsReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::array<double, 3> precision{};
  std::array<double, 3> recall{};
  std::array<double, 3> f1{};
  std::array<std::uint64_t, 3> support{};
  // Averages weighted by true-class support.
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
};

// Empty classes (no predictions or no true samples) score 0 for the
// undefined ratio.
MetricsReport compute_metrics(const ConfusionMatrix& confusion);

}  // namespace fmhca
