#pragma once

#include <vector>

#include "fusdom/tensor.hpp"

namespace fusdom {

// Expression-style free functions over tape-tracked tensors. Every op
// validates shapes, refuses to emit NaN/Inf, and records itself on the
// active tape when any input requires grad.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// x: [m x n], bias: [1 x n], broadcast over rows. The only broadcast in the
/// engine; all other shape mismatches are errors.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double s);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
/// tanh-form approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(const Tensor& x);

/// Normalises each row to mean 0, variance 1, then applies gain/bias
/// (each [1 x n]). Zero-variance rows fall back to eps = 1e-5 in the
/// denominator instead of erroring.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

/// Weighted mean absolute error: sum(w .* |pred - target|) / sum(w).
/// A zero weight total yields the constant 0 (no gradient).
Tensor l1_loss(const Tensor& pred, const Tensor& target, const Matrix& weights);

Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, Index start, Index n);

/// Copies x, overwriting each listed row with `row` ([1 x cols]). Gradients
/// flow to `row` from the overwritten positions and to x elsewhere.
Tensor replace_rows(const Tensor& x, const Tensor& row, const std::vector<Index>& positions);

}  // namespace fusdom
