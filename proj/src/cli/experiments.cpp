#include "cli/experiments.hpp"

#include <chrono>
#include <cstdlib>
#include <numeric>

#include "fmhca/attention.hpp"
#include "fmhca/encoder.hpp"
#include "fmhca/grad_check.hpp"

namespace fmhca::cli {
namespace {

template <typename T>
RunOutcome train_typed(const ModelConfig& cfg, const DataSplit& parts, const TrainOptions& options,
                       const EpochCallback& on_epoch) {
  const auto started = std::chrono::steady_clock::now();
  auto result = train<T>(cfg, parts.train, parts.val, options, on_epoch);
  RunOutcome outcome;
  outcome.history = std::move(result.history);
  outcome.test = evaluate(result.params, cfg, parts.test);
  outcome.params = result.params.template convert<float>();
  outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return outcome;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

using Fn = std::function<Tensor<double>(std::span<const Tensor<double>>)>;

Tensor<double> random_input(const Shape& shape, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.normal();
  return Tensor<double>(shape, std::move(values));
}

GradCheckLine check_function(const std::string& name, const std::vector<Shape>& shapes, const Fn& fn, Rng& rng,
                             double tolerance) {
  std::vector<Tensor<double>> inputs;
  for (const auto& s : shapes) inputs.push_back(random_input(s, rng));
  const auto out_size = fn(std::span<const Tensor<double>>(inputs)).numel();
  std::vector<double> probe(out_size);
  for (auto& v : probe) v = rng.normal();
  TensorFn<double> loss = [&](std::span<const Tensor<double>> in) {
    return ops::weighted_sum(fn(in), std::span<const double>(probe));
  };
  const auto report = grad_check<double>(loss, inputs, 1e-5, tolerance);
  return {name, report.max_relative_error, tolerance, "input " + std::to_string(report.worst_input)};
}

template <typename Build>
GradCheckLine check_parameters(const std::string& name, ParameterSet<double>& params, Build build, Rng& rng,
                               double tolerance) {
  // Move biases, gammas and betas off their special initial values.
  for (auto& e : params.entries()) {
    e.tensor.set_requires_grad(true);
    for (auto& v : e.tensor.mutable_values()) v += 0.05 * rng.normal();
  }
  const auto out_size = build(params).numel();
  std::vector<double> probe(out_size);
  for (auto& v : probe) v = rng.normal();
  std::vector<long double> wide_probe(probe.begin(), probe.end());
  const auto report = grad_check_params(
      [&](const ParameterSet<double>& p) { return ops::weighted_sum(build(p), std::span<const double>(probe)); },
      [&](const ParameterSet<long double>& p) {
        return ops::weighted_sum(build(p), std::span<const long double>(wide_probe));
      },
      params, 1e-6, tolerance);
  return {name, report.max_relative_error, tolerance, params.entries()[report.worst_input].name};
}

OpinionPairSample random_sample(std::size_t m, std::size_t n, std::size_t d, Rng& rng, std::string id) {
  OpinionPairSample s{std::move(id), static_cast<int>(rng.below(3)) - 1, {m, d, {}}, {n, d, {}}};
  for (auto* matrix : {&s.timely, &s.trending}) {
    matrix->values.resize(matrix->rows * d);
    for (auto& v : matrix->values) v = static_cast<float>(rng.normal());
  }
  return s;
}

}  // namespace

Precision precision_from_env() {
  const char* raw = std::getenv("FMHCA_PRECISION");
  if (raw == nullptr || std::string(raw).empty() || std::string(raw) == "f32") return Precision::F32;
  if (std::string(raw) == "f64") return Precision::F64;
  throw Error(ErrorCode::InvalidArgument, std::string("FMHCA_PRECISION must be f32 or f64, got '") + raw + "'");
}

std::string to_string(Precision precision) { return precision == Precision::F64 ? "f64" : "f32"; }

RunOutcome train_and_test(const ModelConfig& cfg, const DataSplit& parts, const TrainOptions& options,
                          Precision precision, const EpochCallback& on_epoch) {
  return precision == Precision::F64 ? train_typed<double>(cfg, parts, options, on_epoch)
                                     : train_typed<float>(cfg, parts, options, on_epoch);
}

MetricsReport evaluate_params(const ParameterSet<float>& params, const ModelConfig& cfg,
                              std::span<const OpinionPairSample> data, Precision precision) {
  if (precision == Precision::F64) return evaluate(params.convert<double>(), cfg, data);
  return evaluate(params, cfg, data);
}

double AblationRow::mean_accuracy() const { return mean(test_accuracy); }
double AblationRow::mean_weighted_f1() const { return mean(test_weighted_f1); }

std::vector<AblationRow> run_ablation(const Dataset& data, const RunConfig& config,
                                      std::span<const Variant> variants,
                                      std::span<const std::uint64_t> seeds, Precision precision,
                                      const AblationProgress& progress) {
  std::vector<AblationRow> rows;
  for (auto v : variants) rows.push_back(AblationRow{v, {}, {}, {}});
  for (auto seed : seeds) {
    const auto parts = split(data.samples, config.split_ratios, seed);
    for (auto& row : rows) {
      auto cfg = config.model;
      cfg.d_emb_in = data.d_emb;
      cfg.variant = row.variant;
      cfg.seed = seed;
      auto options = config.train;
      options.seed = seed;
      const auto outcome = train_and_test(cfg, parts, options, precision);
      row.seeds.push_back(seed);
      row.test_accuracy.push_back(outcome.test.accuracy);
      row.test_weighted_f1.push_back(outcome.test.weighted_f1);
      if (progress) progress(row.variant, seed, outcome);
    }
  }
  return rows;
}

std::vector<GradCheckLine> run_grad_check_suite(std::uint64_t seed, double tolerance) {
  std::vector<GradCheckLine> lines;
  Rng rng(seed);
  const std::vector<std::size_t> targets{0, 2, 1};
  const std::vector<double> class_weights{0.5, 1.0, 2.0};
  const KeyMask rows_valid{1, 0, 1, 1};

  lines.push_back(check_function("matmul", {{3, 4}, {4, 5}}, [](auto in) { return ops::matmul(in[0], in[1]); }, rng, tolerance));
  lines.push_back(check_function("matmul_nt", {{3, 4}, {5, 4}}, [](auto in) { return ops::matmul_nt(in[0], in[1]); }, rng, tolerance));
  lines.push_back(check_function("transpose", {{3, 4}}, [](auto in) { return ops::transpose(in[0]); }, rng, tolerance));
  lines.push_back(check_function("add", {{3, 4}, {3, 4}}, [](auto in) { return ops::add(in[0], in[1]); }, rng, tolerance));
  lines.push_back(check_function("add_bias", {{3, 4}, {4}}, [](auto in) { return ops::add_bias(in[0], in[1]); }, rng, tolerance));
  lines.push_back(check_function("hadamard", {{3, 4}, {3, 4}}, [](auto in) { return ops::hadamard(in[0], in[1]); }, rng, tolerance));
  lines.push_back(check_function("scale", {{3, 4}}, [](auto in) { return ops::scale(in[0], 0.37); }, rng, tolerance));
  lines.push_back(check_function("relu", {{4, 5}}, [](auto in) { return ops::relu(in[0]); }, rng, tolerance));
  lines.push_back(check_function("masked_softmax", {{3, 4}}, [](auto in) {
    return ops::masked_softmax(in[0], Mask{3, 4, {1, 1, 0, 1, 0, 1, 1, 1, 1, 0, 0, 0}});
  }, rng, tolerance));
  lines.push_back(check_function("layer_norm", {{3, 6}, {6}, {6}}, [](auto in) { return ops::layer_norm(in[0], in[1], in[2]); }, rng, tolerance));
  lines.push_back(check_function("dropout", {{4, 5}}, [](auto in) {
    Rng fixed(17);
    return ops::dropout(in[0], 0.25, fixed, true);
  }, rng, tolerance));
  lines.push_back(check_function("reshape", {{3, 4}}, [](auto in) { return ops::reshape(in[0], Shape{2, 6}); }, rng, tolerance));
  lines.push_back(check_function("slice_rows", {{4, 3}}, [](auto in) { return ops::slice_rows(in[0], 1, 3); }, rng, tolerance));
  lines.push_back(check_function("slice_cols", {{3, 5}}, [](auto in) { return ops::slice_cols(in[0], 1, 4); }, rng, tolerance));
  lines.push_back(check_function("concat_rows", {{2, 3}, {1, 3}}, [](auto in) {
    const std::array<Tensor<double>, 2> parts{in[1], in[0]};
    return ops::concat_rows<double>(parts);
  }, rng, tolerance));
  lines.push_back(check_function("concat_cols", {{2, 3}, {2, 2}}, [](auto in) {
    const std::array<Tensor<double>, 2> parts{in[0], in[1]};
    return ops::concat_cols<double>(parts);
  }, rng, tolerance));
  lines.push_back(check_function("masked_mean_rows", {{4, 3}}, [&](auto in) { return ops::masked_mean_rows(in[0], rows_valid); }, rng, tolerance));
  lines.push_back(check_function("cross_entropy", {{3, 3}}, [&](auto in) {
    return ops::cross_entropy(in[0], std::span<const std::size_t>(targets), std::span<const double>(class_weights));
  }, rng, tolerance));

  {
    const AttentionConfig cfg{8, 2};
    ParameterSet<double> params;
    add_mhca_params(params, "stage1", cfg, rng);
    add_mhca_params(params, "stage2", cfg, rng);
    params.add("trending", random_input({4, 8}, rng));
    params.add("timely", random_input({4, 8}, rng));
    lines.push_back(check_parameters("fmhca_two_stage", params, [&](const auto& p) {
      const auto out = fmhca_two_stage(mhca_view(p, "stage1"), mhca_view(p, "stage2"), cfg, p.get("trending"),
                                       p.get("timely"), KeyMask{1, 1, 1, 0}, KeyMask{1, 1, 0, 1});
      return out.refined;
    }, rng, tolerance));
  }
  {
    const EncoderConfig cfg{8, 2, 16};
    ParameterSet<double> params;
    add_transformer_params(params, "layer", cfg, rng);
    params.add("x", random_input({4, 8}, rng));
    lines.push_back(check_parameters("transformer_layer", params, [&](const auto& p) {
      return transformer_layer(transformer_view(p, "layer"), cfg, p.get("x"), KeyMask{1, 1, 1, 0});
    }, rng, tolerance));
  }
  {
    ParameterSet<double> params;
    add_mfb_params(params, "mfb", 2, 8, 8, rng);
    params.add("f", random_input({1, 8}, rng));
    params.add("h", random_input({1, 8}, rng));
    lines.push_back(check_parameters("mfb_pool", params, [&](const auto& p) {
      return mfb_pool(mfb_view(p, "mfb"), p.get("f"), p.get("h"));
    }, rng, tolerance));
  }

  std::vector<OpinionPairSample> samples{random_sample(3, 3, 8, rng, "a"), random_sample(3, 3, 8, rng, "b")};
  const auto batch = make_batch(std::span<const OpinionPairSample>(samples));
  for (auto variant : {Variant::Full, Variant::NoCrossAttention, Variant::NoFusion, Variant::MlpBaseline}) {
    ModelConfig cfg;
    cfg.d_emb_in = 8;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.mfb_factors = 2;
    cfg.d_mfb = 8;
    cfg.d_ff = 16;
    cfg.mlp_hidden = 8;
    cfg.dropout = 0.0;
    cfg.variant = variant;
    cfg.seed = rng.next_u64();
    auto params = build_model<double>(cfg);
    lines.push_back(check_parameters("model:" + to_string(variant), params, [&](const auto& p) {
      Rng unused(0);
      return forward(p, cfg, batch, false, unused).logits;
    }, rng, tolerance));
  }
  return lines;
}

AttentionDump inspect_attention(const ParameterSet<float>& params, const Dataset& data,
                                const std::string& company_id) {
  const auto cfg = infer_config(params);
  if (cfg.variant != Variant::Full && cfg.variant != Variant::NoFusion) {
    throw Error(ErrorCode::InvalidArgument, "variant " + to_string(cfg.variant) + " has no cross-attention maps");
  }
  if (cfg.d_emb_in != data.d_emb) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint expects d_emb " + std::to_string(cfg.d_emb_in) +
                                              ", data has " + std::to_string(data.d_emb));
  }
  for (const auto& s : data.samples) {
    if (s.company_id != company_id) continue;
    const auto batch = make_batch(std::span<const OpinionPairSample>(&s, 1));
    Rng unused(0);
    auto trace = forward(params, cfg, batch, false, unused);
    return {company_id, trace.s1.front(), trace.s2.front()};
  }
  throw Error(ErrorCode::InvalidArgument, "no sample with company id '" + company_id + "'");
}

}  // namespace fmhca::cli
