#pragma once

#include <vector>

#include "somoformer/tensor.hpp"

namespace somoformer {

// Orthonormal DCT basis over sequences of a fixed length. basis()[l*length + t]
// is the weight of sample t in coefficient l (0-indexed). Immutable after
// construction; safe to share across threads.
class DctBasis {
 public:
  explicit DctBasis(int length);

  int length() const { return length_; }
  const std::vector<double>& matrix() const { return matrix_; }

  // C = basis · x along the last axis. Differentiable when x is on a tape.
  Tensor forward(const Tensor& x) const;
  // x = basisᵀ · c along the last axis; exact adjoint of forward.
  Tensor inverse(const Tensor& c) const;

  // Raw-buffer variants for non-autodiff paths (data pipeline, metrics).
  std::vector<double> forward(const std::vector<double>& x) const;
  std::vector<double> inverse(const std::vector<double>& c) const;

 private:
  Tensor apply(const Tensor& x, bool transpose_basis, const char* op) const;

  int length_;
  std::vector<double> matrix_;  // length × length, row-major
};

}  // namespace somoformer
