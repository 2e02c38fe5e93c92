#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "somoformer/tensor.hpp"

namespace somoformer {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter optimizer state. m/v are sized lazily on the first step.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t k = 0;
};

// One bias-corrected Adam update using param's accumulated gradient.
// The gradient is left untouched; callers decide when to zero it.
void adam_step(Tensor& param, AdamState& state, const AdamConfig& config);

// Convenience wrapper holding one AdamState per named parameter.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  void step(std::vector<std::pair<std::string, Tensor>>& params);

  AdamConfig& config() { return config_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  std::map<std::string, AdamState>& states() { return states_; }
  const std::map<std::string, AdamState>& states() const { return states_; }

 private:
  AdamConfig config_;
  std::map<std::string, AdamState> states_;
};

}  // namespace somoformer
