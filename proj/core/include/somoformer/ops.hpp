#pragma once

#include <vector>

#include "somoformer/tensor.hpp"

namespace somoformer {

// Differentiable tensor operations. Every op validates shapes eagerly and
// records its backward rule on the active tape when an input requires grad.
// Without an active tape the ops are plain numeric kernels.

/// Elementwise sum; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise difference; shapes must match exactly.
Tensor sub(const Tensor& a, const Tensor& b);

/// Elementwise product; shapes must match exactly.
Tensor mul(const Tensor& a, const Tensor& b);

/// Multiply by a constant.
Tensor scale(const Tensor& a, double s);

/// x [..., d] + bias [d], broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// Batched matrix product a [..., p, q] x b [..., q, r] -> [..., p, r].
/// Leading (batch) axes must match or broadcast (size 1 stretches).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swap two axes (copying).
Tensor transpose(const Tensor& a, int axis0, int axis1);

/// Same data, new shape with equal element count.
Tensor reshape(const Tensor& a, Shape shape);

/// Contiguous sub-range of the last axis.
Tensor slice_last(const Tensor& a, int offset, int length);

/// Concatenate along the last axis; leading axes must match.
Tensor concat_last(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);

/// Rows of `table` selected by index; gradients scatter-add back.
Tensor gather_rows(const Tensor& table, const std::vector<int>& rows);

/// Softmax over the last axis with a shared key-keep mask.
/// keep[k] == false forces probability exactly 0 at position k; remaining
/// positions are max-stabilized and normalized to sum 1. Throws if nothing
/// is kept.
Tensor masked_softmax(const Tensor& scores, const std::vector<bool>& keep);

/// Normalize the last axis to zero mean / unit variance, then apply the
/// elementwise affine y = gain * xhat + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Sum of all elements, as a single-element tensor.
Tensor sum(const Tensor& a);

}  // namespace somoformer
