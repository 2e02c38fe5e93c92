#include "somoformer/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace somoformer {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step size h must be positive");

  std::vector<std::vector<double>> analytic(params.size());
  {
    for (const auto& [name, p] : params) {
      (void)name;
      Tensor t = p;
      t.zero_grad();
    }
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = loss_fn();
    backward(loss, tape);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor t = params[i].second;
      analytic[i] = t.has_grad() ? t.grad() : std::vector<double>(t.numel(), 0.0);
    }
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params[i].first;
    Tensor t = params[i].second;
    auto& x = t.data();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double saved = x[j];
      x[j] = saved + h;
      const double lp = loss_fn().value();
      x[j] = saved - h;
      const double lm = loss_fn().value();
      x[j] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[i][j];
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        throw std::runtime_error("grad_check: non-finite derivative for parameter '" + name +
                                 "' at element " + std::to_string(j));
      }
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_index = j;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace somoformer
