#include "fmhca/params.hpp"

#include <cstring>

namespace fmhca {

template <typename T>
Tensor<T>& ParameterSet<T>::add(std::string name, Tensor<T> tensor) {
  if (index_.count(name)) throw Error(ErrorCode::NameCollision, "duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(tensor)});
  return entries_.back().tensor;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::MissingTensor, "no parameter '" + name + "'");
  return entries_[it->second].tensor;
}

template <typename T>
Tensor<T>& ParameterSet<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::MissingTensor, "no parameter '" + name + "'");
  return entries_[it->second].tensor;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
ParameterSet<T> ParameterSet<T>::clone() const {
  ParameterSet copy;
  for (const auto& e : entries_) copy.add(e.name, e.tensor.clone_leaf(e.tensor.requires_grad()));
  return copy;
}

template <typename T>
template <typename U>
ParameterSet<U> ParameterSet<T>::convert() const {
  ParameterSet<U> out;
  for (const auto& e : entries_) {
    std::vector<U> values(e.tensor.values().begin(), e.tensor.values().end());
    out.add(e.name, Tensor<U>(e.tensor.shape(), std::move(values), e.tensor.requires_grad()));
  }
  return out;
}

template <typename T>
bool ParameterSet<T>::bitwise_equal(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.tensor.shape() != b.tensor.shape()) return false;
    if (std::memcmp(a.tensor.values().data(), b.tensor.values().data(),
                    a.tensor.numel() * sizeof(T)) != 0)
      return false;
  }
  return true;
}

template <typename T>
GradientMap<T> collect_gradients(const ParameterSet<T>& params) {
  GradientMap<T> grads;
  for (const auto& e : params.entries()) grads.emplace(e.name, Tensor<T>(e.tensor.shape(), e.tensor.grad()));
  return grads;
}

template <typename T>
GradientMap<T> backward(Tensor<T> loss, const ParameterSet<T>& params) {
  loss.backward();
  return collect_gradients(params);
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template ParameterSet<double> ParameterSet<float>::convert<double>() const;
template ParameterSet<float> ParameterSet<double>::convert<float>() const;
template ParameterSet<float> ParameterSet<float>::convert<float>() const;
template ParameterSet<double> ParameterSet<double>::convert<double>() const;
template class ParameterSet<long double>;
template ParameterSet<long double> ParameterSet<double>::convert<long double>() const;
template GradientMap<float> collect_gradients(const ParameterSet<float>&);
template GradientMap<double> collect_gradients(const ParameterSet<double>&);
template GradientMap<float> backward(Tensor<float>, const ParameterSet<float>&);
template GradientMap<double> backward(Tensor<double>, const ParameterSet<double>&);
template GradientMap<long double> collect_gradients(const ParameterSet<long double>&);

}  // namespace fmhca

#include <cmath>

namespace fmhca {

template <typename T>
Tensor<T> glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<T> values(rows * cols);
  for (auto& v : values) v = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>(Shape{rows, cols}, std::move(values), true);
}

template <typename T>
Tensor<T> normal_vector(std::size_t n, double stddev, Rng& rng) {
  std::vector<T> values(n);
  for (auto& v : values) v = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>(Shape{n}, std::move(values), true);
}

template Tensor<float> glorot_uniform(std::size_t, std::size_t, Rng&);
template Tensor<double> glorot_uniform(std::size_t, std::size_t, Rng&);
template Tensor<float> normal_vector(std::size_t, double, Rng&);
template Tensor<double> normal_vector(std::size_t, double, Rng&);
template Tensor<long double> glorot_uniform(std::size_t, std::size_t, Rng&);
template Tensor<long double> normal_vector(std::size_t, double, Rng&);

}  // namespace fmhca
