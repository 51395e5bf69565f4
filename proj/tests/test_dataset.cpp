#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "fmhca/binary_io.hpp"
#include "fmhca/synthetic.hpp"
#include "test_util.hpp"

using namespace fmhca;
using testutil::random_sample;

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

Dataset random_dataset(std::size_t count, std::size_t d, Rng& rng) {
  Dataset data{static_cast<std::uint32_t>(d), {}};
  for (std::size_t i = 0; i < count; ++i)
    data.samples.push_back(random_sample(1 + rng.below(5), 1 + rng.below(5), d, rng, "company-" + std::to_string(i)));
  return data;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fmhca_test_" + name);
}

void put_u32(std::vector<char>& bytes, std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes[offset + i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

}  // namespace

TEST_CASE("label map") {
  CHECK(label_to_index(-1) == 0);
  CHECK(label_to_index(0) == 1);
  CHECK(label_to_index(1) == 2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(label_to_index(index_to_label(i)) == i);
  CHECK_THROWS_AS(label_to_index(2), Error);
}

TEST_CASE("FOPD round trip and layout") {
  Rng rng(51);
  auto data = random_dataset(3, 7, rng);
  data.samples[1].company_id = "Sächsische AG";
  const auto path = temp_path("roundtrip.fopd");
  write_dataset(data, path);
  auto back = read_dataset(path);
  CHECK(back.d_emb == 7);
  CHECK(back.samples == data.samples);
  CHECK(encode_dataset(back) == encode_dataset(data));

  std::size_t expected = 4 + 4 + 4 + 8;
  for (const auto& s : data.samples)
    expected += 4 + s.company_id.size() + 1 + 4 + 4 + 4 * 7 * (s.timely.rows + s.trending.rows);
  CHECK(std::filesystem::file_size(path) == expected);

  const auto bytes = io::read_file(path);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FOPD");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 7);
  CHECK(bytes[12] == 3);
  // Little-endian f32: first timely value of the first sample.
  const std::size_t first_value = 20 + 4 + data.samples[0].company_id.size() + 1 + 8;
  float v;
  std::memcpy(&v, bytes.data() + first_value, 4);
  CHECK(v == data.samples[0].timely.values[0]);
  std::filesystem::remove(path);

  for (int trial = 0; trial < 100; ++trial) {
    auto d = random_dataset(1 + rng.below(4), 1 + rng.below(9), rng);
    auto encoded = encode_dataset(d);
    auto decoded = decode_dataset(encoded);
    CHECK(decoded.samples == d.samples);
    CHECK(encode_dataset(decoded) == encoded);
  }
}

TEST_CASE("FOPD malformed input") {
  Rng rng(52);
  auto good = encode_dataset(random_dataset(2, 4, rng));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { decode_dataset(bad_magic); }) == ErrorCode::BadMagic);
  CHECK(code_of([&] { decode_dataset(std::vector<char>{'F', 'O'}); }) == ErrorCode::BadMagic);

  auto bad_version = good;
  put_u32(bad_version, 4, 2);
  CHECK(code_of([&] { decode_dataset(bad_version); }) == ErrorCode::UnsupportedVersion);

  for (std::size_t cut : {good.size() - 1, good.size() - 17, std::size_t{10}, std::size_t{21}}) {
    std::vector<char> truncated(good.begin(), good.begin() + cut);
    CAPTURE(cut);
    CHECK(code_of([&] { decode_dataset(truncated); }) == ErrorCode::TruncatedFile);
  }

  auto nan = good;
  const float q = std::nanf("");
  std::memcpy(nan.data() + nan.size() - 4, &q, 4);
  CHECK(code_of([&] { decode_dataset(nan); }) == ErrorCode::NonFiniteValue);

  auto trailing = good;
  trailing.push_back(0);
  CHECK(code_of([&] { decode_dataset(trailing); }) == ErrorCode::InvalidArgument);

  auto bad_label = encode_dataset(Dataset{4, {random_sample(1, 1, 4, rng, "x")}});
  bad_label[20 + 4 + 1] = 5;
  CHECK(code_of([&] { decode_dataset(bad_label); }) == ErrorCode::InvalidArgument);

  auto empty_rows = random_sample(1, 1, 4, rng);
  empty_rows.timely = EmbeddingMatrix{0, 4, {}};
  CHECK(code_of([&] { encode_dataset(Dataset{4, {empty_rows}}); }) == ErrorCode::InvalidArgument);
  auto non_finite = random_sample(2, 2, 4, rng);
  non_finite.trending.values[3] = INFINITY;
  CHECK(code_of([&] { encode_dataset(Dataset{4, {non_finite}}); }) == ErrorCode::NonFiniteValue);

  CHECK(code_of([&] { read_dataset(temp_path("missing.fopd")); }) == ErrorCode::Io);
}

TEST_CASE("split") {
  Rng rng(53);
  std::vector<OpinionPairSample> samples;
  for (int i = 0; i < 100; ++i) samples.push_back(random_sample(1, 1, 2, rng, std::to_string(i)));
  auto parts = split(samples, {0.8, 0.1, 0.1}, 9);
  CHECK(parts.train.size() == 80);
  CHECK(parts.val.size() == 10);
  CHECK(parts.test.size() == 10);
  std::multiset<std::string> ids;
  for (const auto* part : {&parts.train, &parts.val, &parts.test})
    for (const auto& s : *part) ids.insert(s.company_id);
  CHECK(ids.size() == 100);
  CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == 100);

  auto again = split(samples, {0.8, 0.1, 0.1}, 9);
  CHECK(again.train == parts.train);
  CHECK(again.test == parts.test);
  CHECK(split(samples, {0.8, 0.1, 0.1}, 10).train != parts.train);
  CHECK(code_of([&] { split(samples, {0.5, 0.1, 0.1}, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("batching") {
  Rng rng(54);
  std::vector<OpinionPairSample> samples;
  for (int i = 0; i < 33; ++i) samples.push_back(random_sample(1 + rng.below(6), 1 + rng.below(6), 3, rng));
  auto batches = make_batches(samples, 16);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size == 16);
  CHECK(batches[1].size == 16);
  CHECK(batches[2].size == 1);

  std::vector<OpinionPairSample> pair{random_sample(3, 2, 3, rng), random_sample(7, 5, 3, rng)};
  auto b = make_batch(std::span<const OpinionPairSample>(pair));
  CHECK(b.max_timely == 7);
  CHECK(b.max_trending == 5);
  CHECK(b.timely_mask_of(0) == KeyMask{1, 1, 1, 0, 0, 0, 0});
  CHECK(b.trending_mask_of(0) == KeyMask{1, 1, 0, 0, 0});
  const auto row = b.timely_of(0);
  for (std::size_t i = 0; i < 9; ++i) CHECK(row[i] == pair[0].timely.values[i]);
  for (std::size_t i = 9; i < row.size(); ++i) CHECK(row[i] == 0.0f);
  CHECK(b.labels == std::vector<int>{pair[0].label, pair[1].label});

  auto s1 = make_batches(samples, 16, 4);
  auto s2 = make_batches(samples, 16, 4);
  CHECK(s1[0].company_ids == s2[0].company_ids);
  CHECK(s1[0].timely == s2[0].timely);
  CHECK(code_of([&] { make_batches(samples, 0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { make_batch(std::span<const OpinionPairSample>()); }) == ErrorCode::EmptyBatch);
}

TEST_CASE("synthetic generation") {
  SyntheticSpec spec;
  spec.companies = 50;
  auto a = encode_dataset(generate_synthetic(spec));
  CHECK(a == encode_dataset(generate_synthetic(spec)));
  spec.seed = 8;
  CHECK(a != encode_dataset(generate_synthetic(spec)));

  spec.task = SyntheticTask::Interaction;
  auto data = generate_synthetic(spec);
  CHECK(data.samples.size() == 50);
  CHECK(data.d_emb == 32);
  for (const auto& s : data.samples) {
    CHECK(s.timely.rows >= 4);
    CHECK(s.timely.rows <= 24);
    CHECK(s.trending.rows >= 4);
    CHECK(s.trending.rows <= 24);
  }
  CHECK(encode_dataset(data) == encode_dataset(generate_synthetic(spec)));

  SyntheticSpec full;
  full.use_full_scale_lengths();
  CHECK(full.timely_min == 150);
  CHECK(full.trending_max == 300);

  SyntheticSpec bad;
  bad.priors = {0.5, 0.5, 0.5};
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
  bad = SyntheticSpec{};
  bad.timely_min = 5;
  bad.timely_max = 4;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
  CHECK(parse_task("interaction") == SyntheticTask::Interaction);
  CHECK(code_of([&] { parse_task("other"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("empirical class priors") {
  for (auto task : {SyntheticTask::Separable, SyntheticTask::Interaction}) {
    SyntheticSpec spec;
    spec.companies = 10000;
    spec.d_emb = 4;
    spec.timely_min = spec.trending_min = 1;
    spec.timely_max = spec.trending_max = 3;
    spec.task = task;
    auto data = generate_synthetic(spec);
    std::array<double, 3> counts{};
    for (const auto& s : data.samples) counts[label_to_index(s.label)] += 1.0;
    CAPTURE(to_string(task));
    CHECK(std::abs(counts[0] / 1e4 - 0.32) <= 0.02);
    CHECK(std::abs(counts[1] / 1e4 - 0.41) <= 0.02);
    CHECK(std::abs(counts[2] / 1e4 - 0.27) <= 0.02);
  }
}

namespace {

// Softmax regression on one mean-pooled modality, full-batch gradient descent.
struct LinearProbe {
  std::size_t d;
  std::vector<double> w;  // [3 x (d + 1)], last column is the bias

  explicit LinearProbe(std::size_t dim) : d(dim), w(3 * (dim + 1), 0.0) {}

  std::array<double, 3> scores(const std::vector<double>& x) const {
    std::array<double, 3> s{};
    for (std::size_t c = 0; c < 3; ++c) {
      s[c] = w[c * (d + 1) + d];
      for (std::size_t j = 0; j < d; ++j) s[c] += w[c * (d + 1) + j] * x[j];
    }
    return s;
  }

  void fit(const std::vector<std::vector<double>>& xs, const std::vector<std::size_t>& ys, int iters, double lr) {
    for (int it = 0; it < iters; ++it) {
      std::vector<double> grad(w.size(), 0.0);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        auto s = scores(xs[i]);
        const double mx = std::max({s[0], s[1], s[2]});
        double z = 0.0;
        for (auto& v : s) z += (v = std::exp(v - mx));
        for (std::size_t c = 0; c < 3; ++c) {
          const double g = s[c] / z - (c == ys[i] ? 1.0 : 0.0);
          for (std::size_t j = 0; j < d; ++j) grad[c * (d + 1) + j] += g * xs[i][j];
          grad[c * (d + 1) + d] += g;
        }
      }
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * grad[k] / static_cast<double>(xs.size());
    }
  }

  double accuracy(const std::vector<std::vector<double>>& xs, const std::vector<std::size_t>& ys) const {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto s = scores(xs[i]);
      hit += static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin()) == ys[i];
    }
    return static_cast<double>(hit) / static_cast<double>(xs.size());
  }
};

std::vector<double> mean_pool(const EmbeddingMatrix& m) {
  std::vector<double> out(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += m.values[r * m.cols + c];
  for (auto& v : out) v /= static_cast<double>(m.rows);
  return out;
}

}  // namespace

TEST_CASE("interaction task needs both modalities") {
  SyntheticSpec spec;
  spec.task = SyntheticTask::Interaction;
  spec.companies = 3000;
  spec.seed = 11;
  auto result = generate_synthetic_detailed(spec);
  const auto& samples = result.data.samples;

  std::size_t rule_hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double dot = 0.0;
    for (std::size_t k = 0; k < spec.latent_dim; ++k)
      dot += result.timely_latent_means[i][k] * result.trending_latent_means[i][k];
    rule_hits += interaction_label(dot, result.neutral_band) == samples[i].label;
  }
  CHECK(rule_hits == samples.size());
  CHECK(interaction_label(-1.0, 0.5) == -1);
  CHECK(interaction_label(0.2, 0.5) == 0);
  CHECK(interaction_label(0.7, 0.5) == 1);

  for (bool use_timely : {true, false}) {
    std::vector<std::vector<double>> train_x, test_x;
    std::vector<std::size_t> train_y, test_y;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto x = mean_pool(use_timely ? samples[i].timely : samples[i].trending);
      const auto y = label_to_index(samples[i].label);
      if (i < 2000) {
        train_x.push_back(std::move(x));
        train_y.push_back(y);
      } else {
        test_x.push_back(std::move(x));
        test_y.push_back(y);
      }
    }
    LinearProbe probe(spec.d_emb);
    probe.fit(train_x, train_y, 300, 0.5);
    CAPTURE(use_timely);
    CHECK(probe.accuracy(test_x, test_y) <= 0.45);
  }
}
