#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "somoformer/rng.hpp"
#include "somoformer/tensor.hpp"

namespace somoformer::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// Central finite difference of a scalar-valued function of one tensor
/// element, for oracle-style gradient comparisons in op tests.
template <typename LossFn>
double fd_derivative(LossFn&& loss, Tensor& t, std::size_t index, double h = 1e-6) {
  auto& x = t.data();
  const double saved = x[index];
  x[index] = saved + h;
  const double lp = loss();
  x[index] = saved - h;
  const double lm = loss();
  x[index] = saved;
  return (lp - lm) / (2.0 * h);
}

}  // namespace somoformer::testing
