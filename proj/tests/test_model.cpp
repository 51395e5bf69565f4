#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fmhca/grad_check.hpp"
#include "fmhca/model.hpp"
#include "test_util.hpp"

using namespace fmhca;
using testutil::random_sample;

namespace {

ModelConfig small_config(Variant v) {
  ModelConfig cfg;
  cfg.d_emb_in = 6;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.mfb_factors = 2;
  cfg.d_mfb = 8;
  cfg.d_ff = 16;
  cfg.mlp_hidden = 8;
  cfg.variant = v;
  return cfg;
}

const Variant kAllVariants[] = {Variant::Full, Variant::NoCrossAttention, Variant::NoFusion, Variant::MlpBaseline};

std::vector<double> logits_of(const ParameterSet<double>& params, const ModelConfig& cfg, const Batch& batch) {
  Rng rng(0);
  auto trace = forward(params, cfg, batch, false, rng);
  return {trace.logits.values().begin(), trace.logits.values().end()};
}

}  // namespace

TEST_CASE("variant names") {
  for (auto v : kAllVariants) CHECK(parse_variant(to_string(v)) == v);
  CHECK(to_string(Variant::NoCrossAttention) == "no_cross_attention");
  CHECK_THROWS_AS(parse_variant("bogus"), Error);
}

TEST_CASE("build_model") {
  ModelConfig cfg;
  auto a = build_model<float>(cfg);
  auto b = build_model<float>(cfg);
  CHECK(a.bitwise_equal(b));
  cfg.seed = 2;
  CHECK_FALSE(a.bitwise_equal(build_model<float>(cfg)));

  // Closed-form count for the default full model.
  const std::size_t d = 128, e = 768, h = 8, dk = 16, ff = 512, k = 16, dm = 128;
  const std::size_t mhca = 3 * h * d * dk + h * dk * d;
  const std::size_t layer = mhca + d * ff + ff + ff * d + d + 4 * d;
  const std::size_t expected = (e * d + d) + 2 * d + 2 * mhca + 2 * layer + 2 * k * dm * d + (3 * dm + 3);
  CHECK(a.scalar_count() == expected);

  auto all_equal = [](std::span<const float> values, float want) {
    return std::all_of(values.begin(), values.end(), [&](float v) { return v == want; });
  };
  for (const auto& entry : a.entries()) {
    CAPTURE(entry.name);
    const auto values = entry.tensor.values();
    CHECK(std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); }));
    const auto& n = entry.name;
    const bool is_bias = n.ends_with(".b") || n.ends_with(".b1") || n.ends_with(".b2") || n.ends_with(".beta");
    if (is_bias) CHECK(all_equal(values, 0.0f));
    if (n.ends_with(".gamma")) CHECK(all_equal(values, 1.0f));
  }
  const auto wp = a.get("proj.w").values();
  const double limit = std::sqrt(6.0 / (768.0 + 128.0));
  CHECK(std::all_of(wp.begin(), wp.end(), [&](float v) { return std::abs(v) <= limit; }));

  for (auto v : kAllVariants) {
    auto c = small_config(v);
    auto params = build_model<double>(c);
    auto inferred = infer_config(params);
    CHECK(inferred.variant == v);
    CHECK(inferred.d_model == c.d_model);
    CHECK(inferred.d_emb_in == c.d_emb_in);
    if (v != Variant::MlpBaseline) {
      CHECK(inferred.heads == c.heads);
      CHECK(inferred.d_ff == c.d_ff);
      CHECK(inferred.n_layers == c.n_layers);
    }
    if (v == Variant::Full || v == Variant::NoCrossAttention) CHECK(inferred.mfb_factors == c.mfb_factors);
  }
  CHECK(build_model<double>(small_config(Variant::NoCrossAttention)).contains("fmhca1.wo") == false);
  ModelConfig bad;
  bad.heads = 7;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ModelConfig{};
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("forward contracts") {
  Rng rng(41);
  std::vector<OpinionPairSample> samples;
  for (int i = 0; i < 5; ++i) samples.push_back(random_sample(1 + rng.below(4), 1 + rng.below(4), 6, rng));
  samples.push_back(samples[1]);
  auto batch = make_batch(std::span<const OpinionPairSample>(samples));

  for (auto v : kAllVariants) {
    CAPTURE(to_string(v));
    auto cfg = small_config(v);
    auto params = build_model<double>(cfg);
    Rng r(1);
    auto trace = forward(params, cfg, batch, false, r);
    CHECK(trace.logits.shape() == Shape{6, 3});
    for (std::size_t b = 0; b < 6; ++b) {
      double total = 0.0;
      for (std::size_t c = 0; c < 3; ++c) total += trace.probabilities.at(b, c);
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
    for (std::size_t c = 0; c < 3; ++c) CHECK(trace.logits.at(1, c) == trace.logits.at(5, c));
    CHECK(logits_of(params, cfg, batch) == logits_of(params, cfg, batch));

    if (v == Variant::Full || v == Variant::NoFusion) {
      REQUIRE(trace.s1.size() == 6);
      for (std::size_t b = 0; b < 6; ++b) {
        CHECK(trace.s1[b].rows == samples[b].trending.rows + 1);
        CHECK(trace.s1[b].cols == samples[b].timely.rows + 1);
        CHECK(trace.s2[b].rows == samples[b].trending.rows + 1);
        CHECK(trace.s2[b].cols == samples[b].trending.rows + 1);
      }
    } else {
      CHECK(trace.s1.empty());
    }
    // Padding to larger maxima changes nothing.
    auto padded = make_batch(std::span<const OpinionPairSample>(samples), 9, 11);
    CHECK(testutil::max_abs_diff(logits_of(params, cfg, padded), logits_of(params, cfg, batch)) <= 1e-6);

    SUBCASE("padding garbage never leaks") {
      auto dirty = padded;
      for (std::size_t b = 0; b < dirty.size; ++b)
        for (std::size_t r2 = 0; r2 < dirty.max_timely; ++r2)
          if (!dirty.timely_mask[b * dirty.max_timely + r2])
            for (std::size_t c = 0; c < 6; ++c) dirty.timely[(b * dirty.max_timely + r2) * 6 + c] = 50.0f;
      CHECK(testutil::max_abs_diff(logits_of(params, cfg, dirty), logits_of(params, cfg, batch)) <= 1e-6);
    }
  }

  auto cfg = small_config(Variant::Full);
  auto params = build_model<double>(cfg);
  Rng r(0);
  CHECK_THROWS_AS(forward(params, cfg, Batch{}, false, r), Error);
  auto wide = make_batch(std::span<const OpinionPairSample>(std::vector{random_sample(2, 2, 7, rng)}));
  CHECK_THROWS_AS(forward(params, cfg, wide, false, r), Error);
}

TEST_CASE("training mode draws dropout masks") {
  Rng rng(42);
  std::vector<OpinionPairSample> samples{random_sample(3, 3, 6, rng), random_sample(2, 4, 6, rng)};
  auto batch = make_batch(std::span<const OpinionPairSample>(samples));
  auto cfg = small_config(Variant::Full);
  cfg.dropout = 0.5;
  auto params = build_model<double>(cfg);
  Rng r1(9), r2(9);
  auto a = forward(params, cfg, batch, true, r1);
  auto b = forward(params, cfg, batch, true, r2);
  CHECK(testutil::max_abs_diff(a.logits.values(), b.logits.values()) == 0.0);
  auto c = forward(params, cfg, batch, true, r1);
  CHECK(testutil::max_abs_diff(a.logits.values(), c.logits.values()) > 0.0);
}

TEST_CASE("mlp baseline is invariant to opinion order") {
  Rng rng(43);
  auto s = random_sample(4, 3, 6, rng);
  auto permuted = s;
  for (std::size_t c = 0; c < 6; ++c) std::swap(permuted.timely.values[c], permuted.timely.values[3 * 6 + c]);
  for (std::size_t c = 0; c < 6; ++c) std::swap(permuted.trending.values[6 + c], permuted.trending.values[2 * 6 + c]);
  std::vector<OpinionPairSample> samples{s, permuted};
  auto batch = make_batch(std::span<const OpinionPairSample>(samples));
  auto cfg = small_config(Variant::MlpBaseline);
  auto params = build_model<double>(cfg);
  Rng r(0);
  auto trace = mlp_baseline_forward(params, cfg, batch, false, r);
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(trace.logits.at(0, c) - trace.logits.at(1, c)) <= 1e-12);
}

TEST_CASE("predict") {
  CHECK(predict<double>(std::vector<double>{0.1, 0.7, 0.2}) == 0);
  CHECK(predict<double>(std::vector<double>{0.6, 0.2, 0.2}) == -1);
  CHECK(predict<double>(std::vector<double>{0.4, 0.4, 0.2}) == -1);
  CHECK(predict<double>(std::vector<double>{0.1, 0.2, 0.7}) == 1);
  Rng rng(44);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p{rng.uniform(), rng.uniform(), rng.uniform()};
    std::vector<double> transformed;
    for (double v : p) transformed.push_back(std::exp(3.0 * v) - 7.0);
    CHECK(predict<double>(p) == predict<double>(transformed));
  }
  CHECK_THROWS_AS(predict<double>(std::vector<double>{0.5, 0.5}), Error);
}

TEST_CASE("every parameter group passes grad_check") {
  Rng rng(45);
  std::vector<OpinionPairSample> samples{random_sample(3, 3, 6, rng), random_sample(2, 3, 6, rng)};
  auto batch = make_batch(std::span<const OpinionPairSample>(samples));
  for (auto v : kAllVariants) {
    CAPTURE(to_string(v));
    auto cfg = small_config(v);
    cfg.dropout = 0.0;
    auto params = build_model<double>(cfg);
    for (auto& e : params.entries())
      for (auto& x : e.tensor.mutable_values()) x += 0.05 * rng.normal();
    auto w = testutil::random_weights<double>(6, rng);
    std::vector<long double> wide_w(w.begin(), w.end());
    auto report = grad_check_params(
        [&](const ParameterSet<double>& p) {
          Rng r(0);
          return ops::weighted_sum(forward(p, cfg, batch, false, r).logits, std::span<const double>(w));
        },
        [&](const ParameterSet<long double>& p) {
          Rng r(0);
          return ops::weighted_sum(forward(p, cfg, batch, false, r).logits, std::span<const long double>(wide_w));
        },
        params, 1e-6, 1e-4);
    CAPTURE(report.worst_input);
    CHECK(report.max_relative_error <= 1e-4);
  }
}
