#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "probmed/graph.hpp"

// Differentiable operations over Graph variables. Binary elementwise ops
// accept a right operand of the same shape, a 1 x n row (broadcast down the
// rows, e.g. a bias), an m x 1 column (broadcast across columns), or a 1 x 1
// scalar.
namespace probmed::diff {

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var negate(Var a);

Var exp(Var a);
/// exp(a) - 1 without cancellation near zero.
Var expm1(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
/// NaN propagates through relu and clamp_min.
Var relu(Var a);
/// max(a, floor); the gradient is zero where the floor is active.
Var clamp_min(Var a, double floor);

/// Sum of all entries, 1 x 1.
Var sum(Var a);
/// Mean of all entries, 1 x 1.
Var mean(Var a);
/// Per-column mean, 1 x n.
Var col_mean(Var a);
/// Per-row sum, m x 1.
Var row_sum(Var a);

/// Per-row max-subtraction log-sum-exp, m x 1.
Var logsumexp_rows(Var a);
Var log_softmax_rows(Var a);
Var softmax_rows(Var a);

Var concat_rows(Var a, Var b);
Var concat_cols(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);

/// Rows scaled to unit L2 norm; the squared norm is floored at `eps`.
Var l2_normalize_rows(Var a, double eps = 1e-12);

/// Picks entries (row, col) into a k x 1 column.
Var gather(Var a, std::vector<std::pair<std::size_t, std::size_t>> index);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return negate(a); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator-(Var a, double c) { return add_scalar(a, -c); }
inline Var operator-(double c, Var a) { return add_scalar(negate(a), c); }

}  // namespace probmed::diff
