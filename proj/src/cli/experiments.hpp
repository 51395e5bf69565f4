#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cli/run_config.hpp"
#include "fmhca/checkpoint.hpp"
#include "fmhca/metrics.hpp"
#include "fmhca/model.hpp"
#include "fmhca/train.hpp"

namespace fmhca::cli {

enum class Precision { F32, F64 };

// FMHCA_PRECISION = f32 (default) | f64.
Precision precision_from_env();
std::string to_string(Precision precision);

struct RunOutcome {
  TrainHistory history;
  ParameterSet<float> params;  // best validation epoch
  MetricsReport test;
  double seconds = 0.0;
};

RunOutcome train_and_test(const ModelConfig& cfg, const DataSplit& parts, const TrainOptions& options,
                          Precision precision, const EpochCallback& on_epoch = {});

MetricsReport evaluate_params(const ParameterSet<float>& params, const ModelConfig& cfg,
                              std::span<const OpinionPairSample> data, Precision precision);

struct AblationRow {
  Variant variant = Variant::Full;
  std::vector<std::uint64_t> seeds;
  std::vector<double> test_accuracy;
  std::vector<double> test_weighted_f1;

  double mean_accuracy() const;
  double mean_weighted_f1() const;
};

using AblationProgress = std::function<void(Variant, std::uint64_t, const RunOutcome&)>;

// For each seed: split the data with that seed, then train every variant from
// the same seed, so rows differ only by architecture.
std::vector<AblationRow> run_ablation(const Dataset& data, const RunConfig& config,
                                      std::span<const Variant> variants,
                                      std::span<const std::uint64_t> seeds, Precision precision,
                                      const AblationProgress& progress = {});

struct GradCheckLine {
  std::string name;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  std::string worst;  // offending input or parameter

  bool passed() const { return max_relative_error <= tolerance; }
};

// Every differentiable primitive, the attention and encoder blocks, and each
// model variant at d_model=8, h=2, K=2, m=n=3, all in 64-bit.
std::vector<GradCheckLine> run_grad_check_suite(std::uint64_t seed, double tolerance = 1e-4);

struct AttentionDump {
  std::string company_id;
  AttentionMap s1, s2;
};

// Throws InvalidArgument for an unknown id or a variant without FMHCA.
AttentionDump inspect_attention(const ParameterSet<float>& params, const Dataset& data,
                                const std::string& company_id);

}  // namespace fmhca::cli
