#pragma once

#include <map>
#include <string>
#include <vector>

#include "fmhca/tensor.hpp"

namespace fmhca {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// Insertion-ordered named collection of learnable leaves.
template <typename T>
class ParameterSet {
 public:
  // Throws NameCollision on a duplicate name.
  Tensor<T>& add(std::string name, Tensor<T> tensor);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::vector<NamedTensor<T>>& entries() const { return entries_; }
  std::vector<NamedTensor<T>>& entries() { return entries_; }

  void zero_grad();
  // Deep copy with fresh leaves (no shared storage with *this).
  ParameterSet clone() const;
  template <typename U>
  ParameterSet<U> convert() const;

  bool bitwise_equal(const ParameterSet& other) const;

 private:
  std::vector<NamedTensor<T>> entries_;
  std::map<std::string, std::size_t> index_;
};

// name -> gradient tensor (values only, no graph).
template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

// Gradients currently accumulated on every parameter; untouched parameters
// map to zeros.
template <typename T>
GradientMap<T> collect_gradients(const ParameterSet<T>& params);

// Runs backward on the loss and returns the parameters' gradient map.
template <typename T>
GradientMap<T> backward(Tensor<T> loss, const ParameterSet<T>& params);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class ParameterSet<long double>;

}  // namespace fmhca

#include "fmhca/rng.hpp"

namespace fmhca {

// Glorot/Xavier uniform, limit sqrt(6 / (fan_in + fan_out)); fan_in = rows.
template <typename T>
Tensor<T> glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

template <typename T>
Tensor<T> normal_vector(std::size_t n, double stddev, Rng& rng);

}  // namespace fmhca
