#pragma once

#include <span>
#include <vector>

#include "saco/autograd/graph.hpp"

// Differentiable primitives over row-major matrices. Every op records its
// backward closure on the operands' graph.
namespace saco::ad {

Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a 1xC row over every row of a
Var scale(Var a, double factor);
Var gelu(Var a);              // tanh approximation

// Row-wise softmax. `additive_mask`, when given, is added to the logits
// before normalization; use -infinity to forbid an entry. Every row must keep
// at least one finite entry.
Var softmax_rows(Var a, const Matrix* additive_mask = nullptr);
Var log_softmax_rows(Var a);

Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var gather_rows(Var table, std::span<const int> rows);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

Var mean_rows(Var a);  // 1xC
Var sum(Var a);        // 1x1
Var mean(Var a);       // 1x1

// out(i) = a(i, cols[i]); entries with cols[i] < 0 are skipped and yield 0.
Var pick(Var a, std::span<const int> cols);

// Cosine similarity of two 1xD rows. Throws on a zero-norm operand.
Var cosine(Var a, Var b);

// log(sum(exp(a))) of a 1xK row, max-shifted.
Var logsumexp_row(Var a);

}  // namespace saco::ad
