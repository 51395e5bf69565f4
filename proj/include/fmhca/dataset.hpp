#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmhca/ops.hpp"

namespace fmhca {

inline constexpr std::size_t kNumClasses = 3;

// {-1, 0, +1} <-> {0, 1, 2}
std::size_t label_to_index(int label);
int index_to_label(std::size_t index);
bool is_valid_label(int label);

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;  // row-major

  std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  bool operator==(const EmbeddingMatrix&) const = default;
};

// One company: timely opinions F (m x d_emb), trending opinions H (n x d_emb).
struct OpinionPairSample {
  std::string company_id;
  int label = 0;
  EmbeddingMatrix timely;
  EmbeddingMatrix trending;

  bool operator==(const OpinionPairSample&) const = default;
};

struct Dataset {
  std::uint32_t d_emb = 0;
  std::vector<OpinionPairSample> samples;
};

// Throws InvalidArgument / NonFiniteValue when a sample breaks its invariants.
void validate_sample(const OpinionPairSample& sample, std::size_t d_emb);

// FOPD container: "FOPD" | version u32 = 1 | d_emb u32 | count u64 | per sample:
// id_len u32 | id | label i8 | m u32 | n u32 | F f32[m*d] | H f32[n*d]. Little-endian.
std::vector<char> encode_dataset(const Dataset& data);
Dataset decode_dataset(std::vector<char> bytes);
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

struct DataSplit {
  std::vector<OpinionPairSample> train, val, test;
};

// Deterministic shuffle then partition. Train and val sizes are rounded from
// the ratios; test takes the remainder.
DataSplit split(std::span<const OpinionPairSample> samples, std::array<double, 3> ratios,
                std::uint64_t seed);

// Samples stacked and zero-padded to the batch maxima.
struct Batch {
  std::size_t size = 0;
  std::size_t d_emb = 0;
  std::size_t max_timely = 0;    // M_max
  std::size_t max_trending = 0;  // N_max
  std::vector<float> timely;     // [B x M_max x d_emb]
  std::vector<float> trending;   // [B x N_max x d_emb]
  std::vector<std::uint8_t> timely_mask;    // [B x M_max]
  std::vector<std::uint8_t> trending_mask;  // [B x N_max]
  std::vector<int> labels;
  std::vector<std::string> company_ids;

  std::span<const float> timely_of(std::size_t b) const;
  std::span<const float> trending_of(std::size_t b) const;
  KeyMask timely_mask_of(std::size_t b) const;
  KeyMask trending_mask_of(std::size_t b) const;
};

// pad_timely/pad_trending raise the padded lengths beyond the batch maxima.
Batch make_batch(std::span<const OpinionPairSample* const> samples, std::size_t pad_timely = 0,
                 std::size_t pad_trending = 0);
Batch make_batch(std::span<const OpinionPairSample> samples, std::size_t pad_timely = 0,
                 std::size_t pad_trending = 0);

// Consecutive batches; the last one may be partial. With a seed the order is
// shuffled first.
std::vector<Batch> make_batches(std::span<const OpinionPairSample> samples, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed = std::nullopt);

}  // namespace fmhca
