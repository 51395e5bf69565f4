#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmhca/dataset.hpp"
#include "fmhca/encoder.hpp"
#include "fmhca/params.hpp"

namespace fmhca {

enum class Variant {
  Full,              // FMHCA -> per-branch transformers -> MFB
  NoCrossAttention,  // per-branch transformers -> MFB
  NoFusion,          // FMHCA -> transformers -> concatenation + linear map
  MlpBaseline,       // mean-pooled projections -> two-layer MLP
};

Variant parse_variant(const std::string& name);
std::string to_string(Variant variant);

struct ModelConfig {
  std::size_t d_emb_in = 768;
  std::size_t d_model = 128;
  std::size_t heads = 8;
  std::size_t mfb_factors = 16;  // K
  std::size_t d_mfb = 128;
  std::size_t d_ff = 512;
  std::size_t n_layers = 1;
  std::size_t mlp_hidden = 128;
  double dropout = 0.1;
  bool dropout_on_projection = true;
  bool share_fmhca = false;  // one parameter set for both FMHCA stages
  Variant variant = Variant::Full;
  std::uint64_t seed = 1;

  void validate() const;
  EncoderConfig encoder() const { return {d_model, heads, d_ff}; }
  AttentionConfig attention() const { return {d_model, heads}; }
};

// Glorot-uniform matrices, zero biases and betas, unit gammas, CLS tokens
// drawn from N(0, 0.02^2). Only the tensors the variant uses are created.
template <typename T>
ParameterSet<T> build_model(const ModelConfig& cfg);

// Recovers the architecture from tensor names and shapes (dropout and seed
// keep their defaults).
template <typename T>
ModelConfig infer_config(const ParameterSet<T>& params);

// Row-major attention matrix trimmed to a sample's valid rows and columns.
struct AttentionMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

template <typename T>
struct ForwardTrace {
  Tensor<T> logits;         // [B x 3], differentiable
  Tensor<T> probabilities;  // [B x 3]
  std::vector<AttentionMap> s1, s2;  // per sample; empty when the variant has no FMHCA
};

// Each sample runs on its padded rows with masks; padded rows never act as
// keys or enter pooled statistics.
template <typename T>
ForwardTrace<T> forward(const ParameterSet<T>& params, const ModelConfig& cfg, const Batch& batch,
                        bool training, Rng& rng);

template <typename T>
ForwardTrace<T> mlp_baseline_forward(const ParameterSet<T>& params, const ModelConfig& cfg,
                                     const Batch& batch, bool training, Rng& rng);

// Argmax with ties to the lowest index, mapped to {-1, 0, +1}.
template <typename T>
int predict(std::span<const T> probabilities);

}  // namespace fmhca
