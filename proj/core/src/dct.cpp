#include "somoformer/dct.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace somoformer {

DctBasis::DctBasis(int length) : length_(length) {
  if (length <= 0) {
    throw std::invalid_argument("DctBasis: length must be positive, got " +
                                std::to_string(length));
  }
  const auto n = static_cast<std::size_t>(length);
  matrix_.resize(n * n);
  const double len = static_cast<double>(length);
  for (int l = 1; l <= length; ++l) {
    // First row carries an extra 1/sqrt(2) so the basis is orthonormal.
    const double norm = std::sqrt(2.0 / len) / (l == 1 ? std::sqrt(2.0) : 1.0);
    for (int t = 1; t <= length; ++t) {
      const double angle =
          std::numbers::pi / (2.0 * len) * static_cast<double>(2 * t - 1) * static_cast<double>(l - 1);
      matrix_[static_cast<std::size_t>(l - 1) * n + static_cast<std::size_t>(t - 1)] =
          norm * std::cos(angle);
    }
  }
}

Tensor DctBasis::apply(const Tensor& x, bool transpose_basis, const char* op) const {
  if (x.rank() < 1 || x.shape().back() != length_) {
    throw std::invalid_argument(std::string(op) + ": last axis of " + shape_str(x.shape()) +
                                " does not match basis length " + std::to_string(length_));
  }
  const auto n = static_cast<std::size_t>(length_);
  const std::size_t rows = x.numel() / n;
  Tensor out(x.shape());
  const auto& vx = x.data();
  auto& vo = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = vx.data() + r * n;
    double* o = vo.data() + r * n;
    for (std::size_t l = 0; l < n; ++l) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double w = transpose_basis ? matrix_[t * n + l] : matrix_[l * n + t];
        acc += w * in[t];
      }
      o[l] = acc;
    }
  }
  if (Tape::active() != nullptr && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    // The adjoint of multiplying by D is multiplying by Dᵀ, and vice versa.
    const std::vector<double>& m = matrix_;
    Tape::active()->record(out, [xc, oc, m, n, rows, transpose_basis]() mutable {
      const auto& g = oc.grad();
      auto& gx = xc.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * n;
        double* gxr = gx.data() + r * n;
        for (std::size_t t = 0; t < n; ++t) {
          double acc = 0.0;
          for (std::size_t l = 0; l < n; ++l) {
            const double w = transpose_basis ? m[t * n + l] : m[l * n + t];
            acc += w * gr[l];
          }
          gxr[t] += acc;
        }
      }
    });
  }
  return out;
}

Tensor DctBasis::forward(const Tensor& x) const { return apply(x, false, "dct_forward"); }
Tensor DctBasis::inverse(const Tensor& c) const { return apply(c, true, "dct_inverse"); }

std::vector<double> DctBasis::forward(const std::vector<double>& x) const {
  if (x.size() != static_cast<std::size_t>(length_)) {
    throw std::invalid_argument("dct_forward: vector length " + std::to_string(x.size()) +
                                " does not match basis length " + std::to_string(length_));
  }
  Tensor t({length_}, x);
  return apply(t, false, "dct_forward").data();
}

std::vector<double> DctBasis::inverse(const std::vector<double>& c) const {
  if (c.size() != static_cast<std::size_t>(length_)) {
    throw std::invalid_argument("dct_inverse: vector length " + std::to_string(c.size()) +
                                " does not match basis length " + std::to_string(length_));
  }
  Tensor t({length_}, c);
  return apply(t, true, "dct_inverse").data();
}

}  // namespace somoformer
