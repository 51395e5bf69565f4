#include "fmhca/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmhca/binary_io.hpp"

namespace fmhca {

namespace {
constexpr std::string_view kDatasetMagic = "FOPD";
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

bool is_valid_label(int label) { return label >= -1 && label <= 1; }

std::size_t label_to_index(int label) {
  if (!is_valid_label(label)) throw Error(ErrorCode::InvalidArgument, "label must be -1, 0 or +1, got " + std::to_string(label));
  return static_cast<std::size_t>(label + 1);
}

int index_to_label(std::size_t index) {
  if (index >= kNumClasses) throw Error(ErrorCode::InvalidArgument, "class index out of range");
  return static_cast<int>(index) - 1;
}

void validate_sample(const OpinionPairSample& sample, std::size_t d_emb) {
  const auto where = " (company '" + sample.company_id + "')";
  if (!is_valid_label(sample.label)) {
    throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(sample.label) + where);
  }
  for (const auto* m : {&sample.timely, &sample.trending}) {
    if (m->rows == 0) throw Error(ErrorCode::InvalidArgument, "empty opinion matrix" + where);
    if (m->cols != d_emb) throw Error(ErrorCode::ShapeMismatch, "embedding width " + std::to_string(m->cols) + " != " + std::to_string(d_emb) + where);
    if (m->values.size() != m->rows * m->cols) throw Error(ErrorCode::ShapeMismatch, "matrix buffer size" + where);
    for (float v : m->values)
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "embedding value" + where);
  }
}

std::vector<char> encode_dataset(const Dataset& data) {
  io::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(data.d_emb);
  w.u64(data.samples.size());
  for (const auto& s : data.samples) {
    validate_sample(s, data.d_emb);
    w.u32(static_cast<std::uint32_t>(s.company_id.size()));
    w.bytes(s.company_id);
    w.i8(static_cast<std::int8_t>(s.label));
    w.u32(static_cast<std::uint32_t>(s.timely.rows));
    w.u32(static_cast<std::uint32_t>(s.trending.rows));
    for (float v : s.timely.values) w.f32(v);
    for (float v : s.trending.values) w.f32(v);
  }
  return w.buffer();
}

Dataset decode_dataset(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  if (r.remaining() < kDatasetMagic.size() || r.bytes(kDatasetMagic.size()) != kDatasetMagic) {
    throw Error(ErrorCode::BadMagic, "not a FOPD file");
  }
  const auto version = r.u32();
  if (version != kDatasetVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "FOPD version " + std::to_string(version));
  }
  Dataset data;
  data.d_emb = r.u32();
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    OpinionPairSample s;
    s.company_id = r.bytes(r.u32());
    s.label = r.i8();
    const std::size_t m = r.u32();
    const std::size_t n = r.u32();
    for (auto [matrix, rows] : {std::pair{&s.timely, m}, std::pair{&s.trending, n}}) {
      matrix->rows = rows;
      matrix->cols = data.d_emb;
      const std::size_t count_values = rows * data.d_emb;
      if (r.remaining() / 4 < count_values) throw Error(ErrorCode::TruncatedFile, "embedding block of sample " + std::to_string(i));
      matrix->values.resize(count_values);
      for (auto& v : matrix->values) v = r.f32();
    }
    validate_sample(s, data.d_emb);
    data.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::InvalidArgument, std::to_string(r.remaining()) + " trailing bytes after FOPD payload");
  }
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(data));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

DataSplit split(std::span<const OpinionPairSample> samples, std::array<double, 3> ratios,
                std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw Error(ErrorCode::InvalidArgument, "split ratios must be nonnegative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "split ratios must sum to 1");

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  const auto n = static_cast<double>(samples.size());
  const auto n_train = std::min<std::size_t>(samples.size(), static_cast<std::size_t>(std::llround(ratios[0] * n)));
  const auto n_val = std::min<std::size_t>(samples.size() - n_train, static_cast<std::size_t>(std::llround(ratios[1] * n)));
  DataSplit out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& bucket = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    bucket.push_back(samples[order[i]]);
  }
  return out;
}

std::span<const float> Batch::timely_of(std::size_t b) const {
  return {timely.data() + b * max_timely * d_emb, max_timely * d_emb};
}

std::span<const float> Batch::trending_of(std::size_t b) const {
  return {trending.data() + b * max_trending * d_emb, max_trending * d_emb};
}

KeyMask Batch::timely_mask_of(std::size_t b) const {
  return KeyMask(timely_mask.begin() + b * max_timely, timely_mask.begin() + (b + 1) * max_timely);
}

KeyMask Batch::trending_mask_of(std::size_t b) const {
  return KeyMask(trending_mask.begin() + b * max_trending, trending_mask.begin() + (b + 1) * max_trending);
}

Batch make_batch(std::span<const OpinionPairSample* const> samples, std::size_t pad_timely,
                 std::size_t pad_trending) {
  if (samples.empty()) throw Error(ErrorCode::EmptyBatch, "cannot batch zero samples");
  Batch batch;
  batch.size = samples.size();
  batch.d_emb = samples.front()->timely.cols;
  batch.max_timely = pad_timely;
  batch.max_trending = pad_trending;
  for (const auto* s : samples) {
    validate_sample(*s, batch.d_emb);
    batch.max_timely = std::max(batch.max_timely, s->timely.rows);
    batch.max_trending = std::max(batch.max_trending, s->trending.rows);
  }
  const std::size_t d = batch.d_emb;
  batch.timely.assign(batch.size * batch.max_timely * d, 0.0f);
  batch.trending.assign(batch.size * batch.max_trending * d, 0.0f);
  batch.timely_mask.assign(batch.size * batch.max_timely, 0);
  batch.trending_mask.assign(batch.size * batch.max_trending, 0);
  for (std::size_t b = 0; b < batch.size; ++b) {
    const auto& s = *samples[b];
    std::copy(s.timely.values.begin(), s.timely.values.end(), batch.timely.begin() + b * batch.max_timely * d);
    std::copy(s.trending.values.begin(), s.trending.values.end(), batch.trending.begin() + b * batch.max_trending * d);
    std::fill_n(batch.timely_mask.begin() + b * batch.max_timely, s.timely.rows, 1);
    std::fill_n(batch.trending_mask.begin() + b * batch.max_trending, s.trending.rows, 1);
    batch.labels.push_back(s.label);
    batch.company_ids.push_back(s.company_id);
  }
  return batch;
}

Batch make_batch(std::span<const OpinionPairSample> samples, std::size_t pad_timely,
                 std::size_t pad_trending) {
  std::vector<const OpinionPairSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(std::span<const OpinionPairSample* const>(ptrs), pad_timely, pad_trending);
}

std::vector<Batch> make_batches(std::span<const OpinionPairSample> samples, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
  std::vector<const OpinionPairSample*> order;
  for (const auto& s : samples) order.push_back(&s);
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(std::span<const OpinionPairSample*>(order));
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.push_back(make_batch(std::span<const OpinionPairSample* const>(order.data() + start, end - start)));
  }
  return batches;
}

}  // namespace fmhca
