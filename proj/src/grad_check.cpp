#include "fmhca/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace fmhca {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

template <typename T>
GradCheckReport grad_check_leaves(const std::function<Tensor<T>()>& loss_fn,
                                  std::span<Tensor<T>> leaves, double h, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  report.per_input.assign(leaves.size(), 0.0);

  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  auto loss = loss_fn();
  loss.backward();
  std::vector<std::vector<T>> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) analytic.push_back(leaf.grad());

  // Finite differences need no graph.
  for (auto& leaf : leaves) leaf.set_requires_grad(false);
  const T step = static_cast<T>(h);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto values = leaves[li].mutable_values();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const T saved = values[e];
      values[e] = saved + step;
      const double plus = static_cast<double>(loss_fn().item());
      values[e] = saved - step;
      const double minus = static_cast<double>(loss_fn().item());
      values[e] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err = relative_error(static_cast<double>(analytic[li][e]), numeric);
      report.per_input[li] = std::max(report.per_input[li], err);
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_input = li;
        report.worst_element = e;
      }
    }
  }
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  return report;
}

template <typename T>
GradCheckReport grad_check(const TensorFn<T>& fn, std::span<Tensor<T>> inputs, double h,
                           double tolerance) {
  std::function<Tensor<T>()> closure = [&]() {
    return fn(std::span<const Tensor<T>>(inputs.data(), inputs.size()));
  };
  return grad_check_leaves<T>(closure, inputs, h, tolerance);
}

GradCheckReport grad_check_params(
    const std::function<Tensor<double>(const ParameterSet<double>&)>& loss_fn,
    const std::function<Tensor<long double>(const ParameterSet<long double>&)>& reference_fn,
    ParameterSet<double>& params, double h, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  report.per_input.assign(params.size(), 0.0);

  params.zero_grad();
  const auto grads = backward(loss_fn(params), params);
  params.zero_grad();

  auto wide = params.convert<long double>();
  for (auto& entry : wide.entries()) entry.tensor.set_requires_grad(false);
  const auto step = static_cast<long double>(h);
  for (std::size_t li = 0; li < wide.size(); ++li) {
    const auto& entry = wide.entries()[li];
    const auto analytic = grads.at(entry.name).values();
    auto values = wide.entries()[li].tensor.mutable_values();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const long double saved = values[e];
      values[e] = saved + step;
      const long double plus = reference_fn(wide).item();
      values[e] = saved - step;
      const long double minus = reference_fn(wide).item();
      values[e] = saved;
      const double numeric = static_cast<double>((plus - minus) / (2.0L * step));
      const double err = relative_error(analytic[e], numeric);
      report.per_input[li] = std::max(report.per_input[li], err);
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_input = li;
        report.worst_element = e;
      }
    }
  }
  return report;
}

template GradCheckReport grad_check_leaves<float>(const std::function<Tensor<float>()>&,
                                                  std::span<Tensor<float>>, double, double);
template GradCheckReport grad_check_leaves<double>(const std::function<Tensor<double>()>&,
                                                   std::span<Tensor<double>>, double, double);
template GradCheckReport grad_check<float>(const TensorFn<float>&, std::span<Tensor<float>>, double,
                                           double);
template GradCheckReport grad_check<double>(const TensorFn<double>&, std::span<Tensor<double>>,
                                            double, double);

}  // namespace fmhca
