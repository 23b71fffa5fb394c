#pragma once

#include <cstddef>
#include <vector>

#include "logattn/matrix.hpp"

namespace logattn {

// One attention problem: queries q (n_q x d_k), keys k (n_k x d_k), and
// values carried as their elementwise logarithm log_v (n_k x d_v). q and k
// entries must be finite; log_v entries may be kNegInf (a zero value).
struct AttentionInputs {
    Matrix2D q;
    Matrix2D k;
    Matrix2D log_v;

    std::size_t n_q() const { return q.rows; }
    std::size_t n_k() const { return k.rows; }
    std::size_t d_k() const { return q.cols; }
    std::size_t d_v() const { return log_v.cols; }

    // Throws std::invalid_argument on shape mismatch or ill-formed entries.
    void validate() const;
};

struct LogAttentionOutput {
    Matrix2D log_s;             // n_q x d_v
    std::vector<double> log_z;  // n_q
    Matrix2D log_a;             // n_q x d_v; log_a[i,j] = log_s[i,j] - log_z[i]
};

// Direct evaluation: materializes the full n_q x n_k matrix of log-domain
// similarities, applies a row softmax, and mixes the values. Serial and
// O(n_q * n_k * (d_k + d_v)); kept as the reference the fast kernels are
// tested against. The scalar c shifts every logit and cancels out of log_a
// and the softmax weights. If weights_out is non-null it receives the
// n_q x n_k softmax weight matrix.
LogAttentionOutput attention_quadratic_reference(const AttentionInputs& in,
                                                 double c,
                                                 Matrix2D* weights_out = nullptr);

// Log-space form: folds all keys/values into a d_k x d_v accumulator and a
// d_k normalizer accumulator, then resolves each query against them. Never
// materializes an n_q x n_k array; O((n_q + n_k) * d_k * d_v) time with
// d_k x d_v peak extra memory. Rows of the output are independent and are
// computed in parallel.
LogAttentionOutput attention_logspace_noncausal(const AttentionInputs& in);

// Causal form: requires n_q == n_k, and row t attends to keys/values 1..t
// only. Runs a prefix scan over the accumulators (materializing
// d_k * n * (d_v + 1) scan states), then resolves query t against the
// states at step t. Row t equals the non-causal kernel applied to the
// length-t prefix.
LogAttentionOutput attention_logspace_causal(const AttentionInputs& in);

}  // namespace logattn
