#include "somoformer/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace somoformer {

void adam_step(Tensor& param, AdamState& state, const AdamConfig& config) {
  const std::size_t n = param.numel();
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n || state.v.size() != n) {
    throw std::invalid_argument("adam_step: state size " + std::to_string(state.m.size()) +
                                " does not match parameter size " + std::to_string(n));
  }
  const auto& g = param.grad();
  auto& x = param.data();
  state.k += 1;
  const double b1k = 1.0 - std::pow(config.beta1, static_cast<double>(state.k));
  const double b2k = 1.0 - std::pow(config.beta2, static_cast<double>(state.k));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g[i] * g[i];
    const double m_hat = state.m[i] / b1k;
    const double v_hat = state.v[i] / b2k;
    x[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

void AdamOptimizer::step(std::vector<std::pair<std::string, Tensor>>& params) {
  for (auto& [name, param] : params) {
    adam_step(param, states_[name], config_);
  }
}

}  // namespace somoformer
