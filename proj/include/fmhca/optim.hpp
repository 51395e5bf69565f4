#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fmhca/params.hpp"

namespace fmhca {

struct AdamConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig hyper;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<T>> first_moment;
  std::map<std::string, std::vector<T>> second_moment;
};

// Bias-corrected Adam. A parameter whose gradient is missing or identically
// zero is left untouched, moments included.
template <typename T>
void adam_step(ParameterSet<T>& params, const GradientMap<T>& grads, AdamState<T>& state);

}  // namespace fmhca
