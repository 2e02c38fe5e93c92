#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "somoformer/tensor.hpp"

namespace somoformer {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares tape gradients of a scalar loss against central finite differences.
// loss_fn must be deterministic and re-runnable; it is evaluated once under a
// fresh tape for the analytic pass and twice per parameter element for the
// numeric pass (with no tape active). Relative error per element is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h = 1e-5);

}  // namespace somoformer
