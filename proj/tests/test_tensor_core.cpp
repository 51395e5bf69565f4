#include <array>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fmhca/grad_check.hpp"
#include "fmhca/ops.hpp"
#include "fmhca/params.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fmhca;
using testutil::random_tensor;
using testutil::random_weights;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected fmhca::Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("rng draws match the reference xoshiro256** sequence") {
  Rng zero(0);
  CHECK(zero.next_u64() == 0x99ec5f36cb75f2b4ULL);
  CHECK(zero.next_u64() == 0xbf6e1f784956452aULL);
  CHECK(zero.next_u64() == 0x1a5f849d4933e6e0ULL);
  Rng r(42);
  CHECK(r.next_u64() == 0x15780b2e0c2ec716ULL);
  CHECK(r.next_u64() == 0x6104d9866d113a7eULL);
  CHECK(r.next_u64() == 0xae17533239e499a1ULL);

  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  Rng c(5);
  for (int i = 0; i < 1000; ++i) {
    const auto v = c.below(7);
    CHECK(v < 7);
  }
}

TEST_CASE("matmul") {
  auto identity = Tensor<double>::matrix(2, 2, {1, 0, 0, 1});
  auto m = Tensor<double>::matrix(2, 2, {3, 4, 5, 6});
  auto out = ops::matmul(identity, m);
  CHECK(std::vector<double>(out.values().begin(), out.values().end()) == std::vector<double>{3, 4, 5, 6});

  auto a = Tensor<double>::matrix(2, 2, {1, 2, 3, 4});
  auto ones = Tensor<double>::matrix(2, 1, {1, 1});
  auto col = ops::matmul(a, ones);
  CHECK(col.shape() == Shape{2, 1});
  CHECK(col.values()[0] == 3);
  CHECK(col.values()[1] == 7);

  SUBCASE("random products agree with the triple loop") {
    Rng rng(3);
    auto x = random_tensor<double>({5, 7}, rng);
    auto y = random_tensor<double>({7, 4}, rng);
    auto want = oracle::matmul(oracle::to_matrix(x.values(), 5, 7), oracle::to_matrix(y.values(), 7, 4));
    auto got = ops::matmul(x, y);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(got.at(i, j) == doctest::Approx(static_cast<double>(want[i][j])).epsilon(1e-12));
    auto nt = ops::matmul_nt(x, ops::transpose(y));
    for (std::size_t i = 0; i < nt.numel(); ++i) CHECK(nt.values()[i] == doctest::Approx(got.values()[i]).epsilon(1e-12));
  }

  auto bad_a = Tensor<double>::zeros({2, 3});
  auto bad_b = Tensor<double>::zeros({2, 3});
  CHECK(code_of([&] { ops::matmul(bad_a, bad_b); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("masked_softmax") {
  auto uniform = ops::masked_softmax(Tensor<double>::matrix(1, 3, {0, 0, 0}));
  for (double v : uniform.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Mask mask{1, 3, {1, 1, 0}};
  auto masked = ops::masked_softmax(Tensor<double>::matrix(1, 3, {5, 5, 9}), mask);
  CHECK(masked.values()[0] == doctest::Approx(0.5));
  CHECK(masked.values()[1] == doctest::Approx(0.5));
  CHECK(masked.values()[2] == 0.0);

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor<double>({3, 6}, rng, 3.0);
    std::vector<double> shifted(x.values().begin(), x.values().end());
    for (auto& v : shifted) v += 17.25;
    auto y1 = ops::masked_softmax(x);
    auto y2 = ops::masked_softmax(Tensor<double>({3, 6}, shifted));
    for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(std::abs(y1.values()[i] - y2.values()[i]) <= 1e-6);

    Mask random_mask{3, 6, {}};
    for (int i = 0; i < 18; ++i) random_mask.valid.push_back(i % 6 == 0 || rng.uniform() < 0.6);
    auto xf = random_tensor<float>({3, 6}, rng, 3.0);
    auto yf = ops::masked_softmax(xf, random_mask);
    for (std::size_t r = 0; r < 3; ++r) {
      std::vector<long double> row;
      std::vector<bool> valid;
      for (std::size_t c = 0; c < 6; ++c) {
        row.push_back(xf.at(r, c));
        valid.push_back(random_mask(r, c));
      }
      auto want = oracle::softmax(row, valid);
      double total = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        const double got = yf.at(r, c);
        total += got;
        if (!valid[c]) CHECK(got == 0.0);
        else CHECK(std::abs(got - static_cast<double>(want[c])) <= 1e-6 * static_cast<double>(want[c]) + 1e-12);
      }
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }

  Mask none{1, 2, {0, 0}};
  CHECK(code_of([&] { ops::masked_softmax(Tensor<double>::matrix(1, 2, {1, 2}), none); }) == ErrorCode::AllMasked);
  Mask wrong{2, 2, {1, 1, 1, 1}};
  CHECK(code_of([&] { ops::masked_softmax(Tensor<double>::matrix(1, 2, {1, 2}), wrong); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("layer_norm") {
  auto gamma = Tensor<double>({2}, {1, 1});
  auto beta = Tensor<double>({2}, {0, 0});
  auto out = ops::layer_norm(Tensor<double>::matrix(1, 2, {1, 3}), gamma, beta, 1e-5);
  CHECK(std::abs(out.values()[0] + 1.0) <= 1e-4);
  CHECK(std::abs(out.values()[1] - 1.0) <= 1e-4);

  auto g4 = Tensor<double>::filled({4}, 1.0);
  auto b4 = Tensor<double>::filled({4}, 0.0);
  auto constant = ops::layer_norm(Tensor<double>::filled({1, 4}, 2.5), g4, b4);
  for (double v : constant.values()) CHECK(v == 0.0);

  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 3 + rng.below(30);
    auto x = random_tensor<double>({2, c}, rng, 2.0);
    auto g = Tensor<double>::filled({c}, 1.0);
    auto b = Tensor<double>::filled({c}, 0.0);
    auto y = ops::layer_norm(x, g, b);
    for (std::size_t r = 0; r < 2; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t j = 0; j < c; ++j) mean += y.at(r, j);
      mean /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) var += (y.at(r, j) - mean) * (y.at(r, j) - mean);
      var /= static_cast<double>(c);
      CHECK(std::abs(mean) <= 1e-6);
      CHECK(std::abs(var - 1.0) <= 1e-4);
    }
    // Per-row additive shift leaves the output unchanged.
    std::vector<double> shifted(x.values().begin(), x.values().end());
    for (std::size_t j = 0; j < c; ++j) shifted[j] += 4.0;
    for (std::size_t j = 0; j < c; ++j) shifted[c + j] -= 1.5;
    auto ys = ops::layer_norm(Tensor<double>({2, c}, shifted), g, b);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(ys.values()[i] - y.values()[i]) <= 1e-5);
  }

  auto g3 = Tensor<double>::filled({3}, 1.0);
  CHECK(code_of([&] { ops::layer_norm(Tensor<double>::zeros({1, 2}), g3, beta); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("relu values and subgradient") {
  auto y = ops::relu(Tensor<double>({2}, {-1, 2}));
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 2.0);
  auto neg = ops::relu(Tensor<double>({3}, {-1, -2, -0.5}));
  for (double v : neg.values()) CHECK(v == 0.0);

  auto x = Tensor<double>({3}, {3.0, -3.0, 0.0}, true);
  auto loss = ops::sum(ops::relu(x));
  loss.backward();
  CHECK(x.grad() == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("dropout") {
  Rng rng(1);
  auto x = random_tensor<float>({100, 1000}, rng);
  Rng drop_rng(77);
  auto same = ops::dropout(x, 0.1, drop_rng, false);
  CHECK(same.node() == x.node());
  auto zero_rate = ops::dropout(x, 0.0, drop_rng, true);
  CHECK(zero_rate.node() == x.node());

  auto ones = Tensor<float>::filled({100, 1000}, 1.0f);
  auto dropped = ops::dropout(ones, 0.1, drop_rng, true);
  std::size_t kept = 0;
  double total = 0.0;
  for (float v : dropped.values()) {
    kept += v != 0.0f;
    total += v;
  }
  const double kept_fraction = static_cast<double>(kept) / 1e5;
  CHECK(std::abs(kept_fraction - 0.9) <= 0.01);
  CHECK(std::abs(total / 1e5 - 1.0) <= 0.02);

  Rng r1(5), r2(5);
  auto d1 = ops::dropout(x, 0.3, r1, true);
  auto d2 = ops::dropout(x, 0.3, r2, true);
  CHECK(std::equal(d1.values().begin(), d1.values().end(), d2.values().begin()));
  CHECK(code_of([&] { ops::dropout(x, 1.0, r1, true); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("backward") {
  auto x = Tensor<double>({2}, {1, 2}, true);
  auto loss = ops::sum(ops::hadamard(x, x));
  loss.backward();
  CHECK(x.grad() == std::vector<double>{2, 4});
  CHECK(code_of([&] { loss.backward(); }) == ErrorCode::DoubleBackward);

  SUBCASE("constant loss gives zero gradients") {
    ParameterSet<double> params;
    params.add("w", Tensor<double>({3}, {1, 2, 3}, true));
    auto constant = ops::sum(Tensor<double>({2}, {4, 5}));
    auto grads = backward(constant, params);
    CHECK(grads.at("w").values()[0] == 0.0);
    CHECK(grads.at("w").values()[2] == 0.0);
  }

  SUBCASE("matmul chain against central differences") {
    Rng rng(8);
    auto a = random_tensor<double>({3, 4}, rng, 1.0, true);
    auto b = random_tensor<double>({4, 2}, rng, 1.0, true);
    auto c = random_tensor<double>({2, 3}, rng, 1.0, true);
    auto w = random_weights<double>(9, rng);
    auto fn = [&] { return ops::weighted_sum(ops::matmul(ops::matmul(a, b), c), std::span<const double>(w)); };
    auto l = fn();
    l.backward();
    const auto ga = a.grad();
    const double h = 1e-5;
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const double saved = a.values()[i];
      a.mutable_values()[i] = saved + h;
      const double plus = fn().item();
      a.mutable_values()[i] = saved - h;
      const double minus = fn().item();
      a.mutable_values()[i] = saved;
      CHECK(relative_error(ga[i], (plus - minus) / (2 * h)) <= 1e-5);
    }
  }
}

TEST_CASE("grad_check harness") {
  Rng rng(4);
  std::vector<Tensor<double>> inputs{random_tensor<double>({3, 3}, rng)};
  TensorFn<double> quadratic = [](std::span<const Tensor<double>> in) {
    return ops::sum(ops::hadamard(in[0], in[0]));
  };
  auto report = grad_check<double>(quadratic, inputs, 1e-5, 1e-9);
  CHECK(report.max_relative_error <= 1e-9);

  SUBCASE("corrupted gradient rule is caught") {
    std::vector<Tensor<double>> mats{random_tensor<double>({3, 4}, rng), random_tensor<double>({4, 2}, rng)};
    auto w = random_weights<double>(6, rng);
    TensorFn<double> product = [&](std::span<const Tensor<double>> in) {
      return ops::weighted_sum(ops::matmul(in[0], in[1]), std::span<const double>(w));
    };
    CHECK(grad_check<double>(product, mats, 1e-5, 1e-5).passed());
    fault::set_matmul_grad_fault(true);
    auto broken = grad_check<double>(product, mats, 1e-5, 1e-5);
    fault::set_matmul_grad_fault(false);
    CHECK_FALSE(broken.passed());
    CHECK(broken.worst_input == 1);
  }
}

TEST_CASE("every primitive passes grad_check at 1e-5 on 20 seeds") {
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    std::function<Tensor<double>(std::span<const Tensor<double>>)> fn;
  };
  Rng drop_rng(0);
  const KeyMask rows_valid{1, 0, 1, 1};
  const std::vector<std::size_t> targets{0, 2, 1, 2};
  const std::vector<double> class_weights{0.5, 1.0, 2.0};
  std::vector<Case> cases{
      {"matmul", {{3, 4}, {4, 5}}, [](auto in) { return ops::matmul(in[0], in[1]); }},
      {"matmul_nt", {{3, 4}, {5, 4}}, [](auto in) { return ops::matmul_nt(in[0], in[1]); }},
      {"transpose", {{3, 4}}, [](auto in) { return ops::transpose(in[0]); }},
      {"add", {{3, 4}, {3, 4}}, [](auto in) { return ops::add(in[0], in[1]); }},
      {"add_bias", {{3, 4}, {4}}, [](auto in) { return ops::add_bias(in[0], in[1]); }},
      {"hadamard", {{3, 4}, {3, 4}}, [](auto in) { return ops::hadamard(in[0], in[1]); }},
      {"scale", {{3, 4}}, [](auto in) { return ops::scale(in[0], 0.37); }},
      {"relu", {{4, 5}}, [](auto in) { return ops::relu(in[0]); }},
      {"masked_softmax", {{3, 5}}, [](auto in) {
         Mask m{3, 5, {1, 1, 0, 1, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0, 0}};
         return ops::masked_softmax(in[0], m);
       }},
      {"layer_norm", {{3, 6}, {6}, {6}}, [](auto in) { return ops::layer_norm(in[0], in[1], in[2]); }},
      {"dropout", {{4, 5}}, [&](auto in) {
         Rng fixed(123);  // same mask on every evaluation
         return ops::dropout(in[0], 0.25, fixed, true);
       }},
      {"reshape", {{3, 4}}, [](auto in) { return ops::reshape(in[0], Shape{2, 6}); }},
      {"slice_rows", {{4, 3}}, [](auto in) { return ops::slice_rows(in[0], 1, 3); }},
      {"slice_cols", {{3, 5}}, [](auto in) { return ops::slice_cols(in[0], 1, 4); }},
      {"concat_rows", {{2, 3}, {3}}, [](auto in) {
         std::array<Tensor<double>, 2> parts{in[1], in[0]};
         return ops::concat_rows<double>(parts);
       }},
      {"concat_cols", {{2, 3}, {2, 2}}, [](auto in) {
         std::array<Tensor<double>, 2> parts{in[0], in[1]};
         return ops::concat_cols<double>(parts);
       }},
      {"masked_mean_rows", {{4, 3}}, [&](auto in) { return ops::masked_mean_rows(in[0], rows_valid); }},
      {"cross_entropy", {{4, 3}}, [&](auto in) {
         return ops::cross_entropy(in[0], std::span<const std::size_t>(targets));
       }},
      {"cross_entropy_weighted", {{4, 3}}, [&](auto in) {
         return ops::cross_entropy(in[0], std::span<const std::size_t>(targets),
                                   std::span<const double>(class_weights));
       }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(1000 + seed);
      std::vector<Tensor<double>> inputs;
      for (const auto& s : c.shapes) inputs.push_back(random_tensor<double>(s, rng));
      // Probe weights make every output element matter.
      const auto out_size = c.fn(std::span<const Tensor<double>>(inputs)).numel();
      auto w = random_weights<double>(out_size, rng);
      TensorFn<double> probe = [&](std::span<const Tensor<double>> in) {
        return ops::weighted_sum(c.fn(in), std::span<const double>(w));
      };
      auto report = grad_check<double>(probe, inputs, 1e-5, 1e-5);
      CAPTURE(seed);
      CHECK(report.max_relative_error <= 1e-5);
    }
  }
}
