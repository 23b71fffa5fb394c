#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "logattn/kernels.hpp"
#include "logattn/matrix.hpp"

namespace logattn {

// Fixed-size log-domain summary of every absorbed token: exactly
// d_k * (d_v + 1) numbers no matter how many tokens went in. h_s[a,b] is
// the lse over absorbed tokens of k_t[a] + log_v_t[b]; h_z[a] the lse of
// k_t[a]. A fresh state is all kNegInf (the exponentiated accumulators
// start at zero).
struct StreamState {
    Matrix2D h_s;              // d_k x d_v
    std::vector<LogReal> h_z;  // d_k
    std::uint64_t t = 0;       // number of absorbed tokens

    std::size_t d_k() const { return h_z.size(); }
    std::size_t d_v() const { return h_s.cols; }
};

// Per-step query result.
struct StreamStepOutput {
    std::vector<double> log_s;  // d_v
    double log_z = 0.0;
    std::vector<double> log_a;  // d_v; log_s - log_z
};

// All-kNegInf state with t = 0. Throws on zero dimensions.
StreamState state_init(std::size_t d_k, std::size_t d_v);

// Absorb one token: h_s[a,b] <- logadd(h_s[a,b], k_t[a] + log_v_t[b]),
// h_z[a] <- logadd(h_z[a], k_t[a]), t <- t + 1. O(d_k * d_v), independent
// of t. k_t entries must be finite; log_v_t entries finite or kNegInf.
void state_update(StreamState& s, std::span<const double> k_t,
                  std::span<const double> log_v_t);

// Resolve one query against the current state: log_s[b] = lse over a of
// q_t[a] + h_s[a,b], log_z = lse over a of q_t[a] + h_z[a]. Throws
// "empty context" when no token has been absorbed yet.
StreamStepOutput state_query_autoregressive(const StreamState& s,
                                            std::span<const double> q_t);

// Resolve every row of q against the current state. Equals the non-causal
// batch kernel over the absorbed tokens. Rows computed in parallel.
LogAttentionOutput state_query_all(const StreamState& s, const Matrix2D& q);

// Elementwise logadd of the accumulators; t adds. Combining the states of
// two token chunks equals the state of their concatenation, which is what
// makes chunk-parallel construction possible. state_init is the identity.
StreamState state_combine(const StreamState& a, const StreamState& b);

// Absorb every row of k / log_v into a fresh state, one token at a time.
StreamState build_state(const Matrix2D& k, const Matrix2D& log_v);

// Same result within rounding: split the rows into contiguous chunks, build
// each chunk's state independently (chunks run in parallel), then fold the
// chunk states left to right with state_combine.
StreamState build_state_chunked(const Matrix2D& k, const Matrix2D& log_v,
                                std::size_t chunk);

// Snapshot I/O failure or corruption.
struct StateIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Snapshot format: header of three little-endian uint64 (d_k, d_v, t), then
// d_k*d_v h_s doubles row-major, then d_k h_z doubles, each as IEEE-754
// bits little-endian. kNegInf is stored as IEEE -inf.
std::size_t state_snapshot_bytes(const StreamState& s);
void save_state(const StreamState& s, std::ostream& out);
StreamState load_state(std::istream& in);
void save_state_file(const StreamState& s, const std::string& path);
StreamState load_state_file(const std::string& path);

}  // namespace logattn
