#pragma once

#include "logattn/kernels.hpp"
#include "logattn/matrix.hpp"

namespace logattn {

// Gradients of a scalar loss with respect to the attention inputs, given
// the upstream cotangent dL/dlog_a.
struct AttentionGradients {
    Matrix2D grad_q;      // n_q x d_k
    Matrix2D grad_k;      // n_k x d_k
    Matrix2D grad_log_v;  // n_k x d_v
};

// Chain rule through the non-causal log-space forward. Each lse Jacobian is
// the softmax of its inputs; log_a = log_s - log_z splits the cotangent
// into a positive and a negative stream. Requires all-finite inputs
// (a kNegInf value has no finite gradient).
// O((n_q + n_k) * d_k * d_v).
AttentionGradients backward_logspace_noncausal(const AttentionInputs& in,
                                               const Matrix2D& cotangent);

// Central differences of L = sum(cotangent * log_a) under +-step
// perturbation of every input entry. The forward is the same streaming
// recurrence as attention_logspace_noncausal, evaluated in quad precision:
// a double-precision loss carries ~eps*|L|/(2*step) of rounding noise,
// which at step 1e-5 would swamp gradients below ~1e-5 and every exact
// zero. The independent check for the analytic backward.
AttentionGradients finite_difference_oracle(const AttentionInputs& in,
                                            const Matrix2D& cotangent,
                                            double step);

// max over all entries of |a - b| / max(|a|, |b|, 1e-8).
double gradient_rel_error(const AttentionGradients& a,
                          const AttentionGradients& b);

}  // namespace logattn
