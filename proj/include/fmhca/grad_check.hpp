#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fmhca/params.hpp"
#include "fmhca/tensor.hpp"

namespace fmhca {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::vector<double> per_input;  // max relative error for each checked tensor
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double tolerance = 0.0;

  bool passed() const { return max_relative_error <= tolerance; }
};

// Compares the reverse-mode gradient of a scalar function against central
// differences, element by element. Relative error uses max(|a|, |n|, 1e-8)
// as the denominator.
template <typename T>
GradCheckReport grad_check_leaves(const std::function<Tensor<T>()>& loss_fn,
                                  std::span<Tensor<T>> leaves, double h = 1e-5,
                                  double tolerance = 1e-4);

template <typename T>
using TensorFn = std::function<Tensor<T>(std::span<const Tensor<T>>)>;

template <typename T>
GradCheckReport grad_check(const TensorFn<T>& fn, std::span<Tensor<T>> inputs, double h = 1e-5,
                           double tolerance = 1e-4);

// Reverse-mode gradients of loss_fn (64-bit) against central differences of
// reference_fn, the same function evaluated in extended precision on a
// long double copy of the parameters. per_input follows params.entries().
GradCheckReport grad_check_params(
    const std::function<Tensor<double>(const ParameterSet<double>&)>& loss_fn,
    const std::function<Tensor<long double>(const ParameterSet<long double>&)>& reference_fn,
    ParameterSet<double>& params, double h = 1e-6, double tolerance = 1e-4);

double relative_error(double analytic, double numeric);

}  // namespace fmhca
