#include "fmhca/optim.hpp"

#include <algorithm>
#include <cmath>

namespace fmhca {

template <typename T>
void adam_step(ParameterSet<T>& params, const GradientMap<T>& grads, AdamState<T>& state) {
  ++state.step;
  const auto& h = state.hyper;
  const double correction1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (auto& entry : params.entries()) {
    auto it = grads.find(entry.name);
    if (it == grads.end()) continue;
    const auto g = it->second.values();
    auto values = entry.tensor.mutable_values();
    if (g.size() != values.size()) {
      throw Error(ErrorCode::ShapeMismatch, "gradient for '" + entry.name + "' has the wrong size");
    }
    if (std::all_of(g.begin(), g.end(), [](T x) { return x == T(0); })) continue;

    auto& m = state.first_moment[entry.name];
    auto& v = state.second_moment[entry.name];
    if (m.empty()) {
      m.assign(values.size(), T(0));
      v.assign(values.size(), T(0));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = static_cast<T>(h.beta1 * m[i] + (1.0 - h.beta1) * g[i]);
      v[i] = static_cast<T>(h.beta2 * v[i] + (1.0 - h.beta2) * static_cast<double>(g[i]) * g[i]);
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] = static_cast<T>(values[i] - h.lr * m_hat / (std::sqrt(v_hat) + h.eps));
    }
  }
}

template void adam_step(ParameterSet<float>&, const GradientMap<float>&, AdamState<float>&);
template void adam_step(ParameterSet<double>&, const GradientMap<double>&, AdamState<double>&);

}  // namespace fmhca
