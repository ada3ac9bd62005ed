#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cgdt/diff/tensor.hpp"

// Differentiable operations. Every op records itself on the active tape when
// at least one input requires gradients; shape mismatches throw ShapeError
// naming the offending shapes.
//
// Binary elementwise ops broadcast over leading dimensions: the shape of the
// smaller operand must be a suffix of the larger one (a scalar is a suffix of
// everything).
namespace cgdt::diff {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor tanh(const Tensor& x);
/// log(1 + exp(x)), computed stably.
Tensor softplus(const Tensor& x);

/// a: [..., m, k]. b: [k, n] (shared across leading dims) or [..., k, n]
/// with the same leading dims as a.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose_last2(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

/// Softmax over the last axis. Entries equal to -inf get probability 0; a row
/// that is entirely -inf maps to all zeros.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

/// Normalizes over the last axis, then applies gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Inverted dropout. Identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);

/// scores: [B, H, L, L]; allowed: B*L*L flags (query-major). Disallowed
/// entries become -inf.
Tensor apply_attention_mask(const Tensor& scores, std::span<const std::uint8_t> allowed);

/// table: [V, D] → [indices.size(), D].
Tensor embedding(const Tensor& table, std::span<const std::size_t> indices);
/// Treats x as rows of its last axis and gathers rows → [indices.size(), D].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
/// Concatenates along axis 0; trailing shapes must match.
Tensor concat_rows(const std::vector<Tensor>& parts);
/// Contiguous slice [start, start+length) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// x: [..., C]; picks x[..., indices[i]] for each leading row i → [...].
Tensor select_last(const Tensor& x, std::span<const std::size_t> indices);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sums over the last axis: [..., C] → [...].
Tensor sum_last(const Tensor& x);

/// Same values, no gradient history.
Tensor stop_gradient(const Tensor& x);

}  // namespace cgdt::diff
