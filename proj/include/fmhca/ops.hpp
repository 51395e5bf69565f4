#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fmhca/rng.hpp"
#include "fmhca/tensor.hpp"

namespace fmhca {

// 1 marks a valid (attendable) position, 0 marks padding.
using KeyMask = std::vector<std::uint8_t>;

struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> valid;

  static Mask all_valid(std::size_t rows, std::size_t cols);
  // Every row sees the same key validity pattern.
  static Mask from_keys(std::size_t rows, const KeyMask& keys);
  bool operator()(std::size_t r, std::size_t c) const { return valid[r * cols + c] != 0; }
};

namespace ops {

// Dense products. matmul_nt computes A * B^T without materializing B^T.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
// a[r x c] + bias[c] on every row.
template <typename T> Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias);
template <typename T> Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> relu(const Tensor<T>& a);

// Row-wise softmax over the last axis, shift-stabilized by the max of the
// valid entries. Masked entries come out as exactly zero.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, const std::optional<Mask>& mask = std::nullopt);

// Population variance per row; gamma/beta are length-c affines.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

// Inverted dropout. Identity when !training or rate == 0 (no draws consumed).
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool training);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> concat_rows(std::span<const Tensor<T>> parts);
template <typename T> Tensor<T> concat_cols(std::span<const Tensor<T>> parts);

// Mean over the valid rows only -> [1 x c].
template <typename T> Tensor<T> masked_mean_rows(const Tensor<T>& a, const KeyMask& rows_valid);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
// sum(a .* weights) with constant weights; handy as a probe loss.
template <typename T> Tensor<T> weighted_sum(const Tensor<T>& a, std::span<const T> weights);

// Mean (optionally class-weighted) negative log-likelihood of softmax(logits)
// at the target indices, through log-sum-exp.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets,
                        std::span<const T> class_weights = {});

}  // namespace ops

// Verification hook: perturbs the matmul right-hand gradient rule so the
// gradient checker can demonstrate that it catches a broken derivative.
namespace fault {
void set_matmul_grad_fault(bool enabled);
bool matmul_grad_fault();
}  // namespace fault

}  // namespace fmhca
