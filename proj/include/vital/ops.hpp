#pragma once

#include <span>
#include <vector>

#include "vital/autograd.hpp"
#include "vital/rng.hpp"

namespace vital {

// GELU, tanh approximation:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
inline constexpr double kGeluSqrt2OverPi = 0.7978845608028654;
inline constexpr double kGeluCubic = 0.044715;
inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kNormFloor = 1e-12;

// Plain kernels on tensors (row-wise where applicable).
namespace kernels {

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);
Tensor gelu(const Tensor& x);
double gelu(double x);
Tensor l2_normalize(const Tensor& x, double floor = kNormFloor);
double cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const char> mask);
double l1_loss(const Tensor& pred, const Tensor& target);
Tensor softmax_row(std::span<const double> logits);

}  // namespace kernels

// Differentiable ops. Every input and output is a matrix; vectors are 1×n.
namespace ops {

// X[T×n] · Wᵀ, W is [m×n].
Var linear(const Var& x, const Var& w);
Var add(const Var& a, const Var& b);
// Adds a 1×n row to every row of a.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = kLayerNormEps);
// Rotary position encoding on each head's (2i, 2i+1) pairs; row t sits at position pos0 + t.
Var rope(const Var& x, std::size_t n_heads, std::size_t pos0);
// Causal multi-head attention. Keys/values are the concatenation of the blocks
// (positions 0..N-1); query row t sits at position q_pos0 + t and attends to
// every key position <= its own.
Var attention(const Var& q, std::span<const Var> key_blocks, std::span<const Var> value_blocks,
              std::size_t n_heads, std::size_t q_pos0);
// Inverted dropout; identity when rate == 0.
Var dropout(const Var& x, double rate, Rng& rng);
Var embedding(const Var& table, std::span<const int> ids);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, std::size_t start, std::size_t count);
// Mean negative log-likelihood over rows with mask != 0.
Var cross_entropy(const Var& logits, std::span<const int> targets, std::span<const char> mask);
// Mean absolute difference against a constant target.
Var l1_loss(const Var& pred, const Tensor& target);
Var sum(std::span<const Var> scalars);

}  // namespace ops

}  // namespace vital
