#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "logattn/matrix.hpp"

namespace logattn {

enum class BenchForm { Quadratic, Logspace, Streaming };

// One harness invocation. The seed fully determines every generated input:
// entries are drawn uniformly from [-value_range, value_range) by mapping
// the top 53 bits of consecutive std::mt19937_64 outputs, so a given
// (seed, shape) pair yields the same matrices on every run.
struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t n = 32;
    std::size_t d_k = 8;
    std::size_t d_v = 8;
    double value_range = 5.0;
    double tol_cross = 1e-9;  // cross-form agreement, exp domain
    double tol_alg = 1e-12;   // algebraic identities
    std::size_t chunk = 64;   // chunk size for the chunk-parallel state build
    std::optional<BenchForm> form;  // bench: restrict to one form
    std::string out_path;           // empty = stdout

    // Throws std::invalid_argument on unusable values ("empty context" for
    // n == 0).
    void validate() const;
};

double uniform_entry(std::mt19937_64& rng, double range);
Matrix2D random_matrix(std::mt19937_64& rng, std::size_t rows,
                       std::size_t cols, double range);

struct PropertyResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct CheckReport {
    std::vector<PropertyResult> properties;
    bool all_pass = false;
    std::string to_json(const RunConfig& cfg) const;
};

// Runs every library invariant at the configured sizes: log-space monoid
// laws, cross-form equivalences, streaming/batch agreement, chunked-scan
// agreement (chunk sizes 1, 2, 7, 64 plus the configured one), and the
// gradient check.
CheckReport run_check(const RunConfig& cfg);

struct BenchRecord {
    std::size_t n = 0;
    std::string form;
    double per_token_ns = 0.0;
    std::size_t state_bytes = 0;
};

struct BenchReport {
    std::vector<BenchRecord> records;
    std::string to_csv() const;  // header: n,form,per_token_ns,state_bytes
};

// Streaming and logspace rows at n in {2^7 .. 2^14}; quadratic rows at the
// same n capped by cfg.n (the quadratic form is the one that stops being
// feasible). per_token_ns is the median over >= 9 repetitions (after 2
// warmups) of the whole-sequence wall time divided by n. state_bytes is
// what the form must keep around to absorb the next token: the serialized
// state for streaming, the retained context or scan states for the batch
// forms.
BenchReport run_bench(const RunConfig& cfg);

struct StreamDemoReport {
    bool resumed = false;
    std::uint64_t tokens_before = 0;
    std::uint64_t tokens_total = 0;
    bool roundtrip_bit_exact = false;
    double max_abs_diff = 0.0;
    double tolerance = 1e-11;
    bool pass = false;
    std::string snapshot_path;
    std::string to_json() const;
};

// Save/resume demo. Fresh snapshot path: absorb n tokens, save, reload
// (checking the roundtrip is bit-exact), absorb n more. Existing snapshot:
// load it (corruption raises StateIoError) and absorb the next n tokens.
// Either way the per-step outputs are verified against one uninterrupted
// run over the same deterministic token stream.
StreamDemoReport run_stream_demo(const RunConfig& cfg,
                                 const std::string& snapshot_path);

}  // namespace logattn
