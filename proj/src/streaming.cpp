#include "logattn/streaming.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "logattn/logspace.hpp"

namespace logattn {

namespace {

// Dimension cap when reading a snapshot header, so a corrupt file cannot
// request an absurd allocation.
constexpr std::uint64_t kMaxSnapshotDim = 1u << 20;

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double d) {
    put_u64(out, std::bit_cast<std::uint64_t>(d));
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw StateIoError("truncated snapshot");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    return std::bit_cast<double>(get_u64(in));
}

}  // namespace

StreamState state_init(std::size_t d_k, std::size_t d_v) {
    if (d_k == 0 || d_v == 0) {
        throw std::invalid_argument("state dimensions must be positive");
    }
    StreamState s;
    s.h_s = Matrix2D(d_k, d_v, kNegInf);
    s.h_z.assign(d_k, kNegInf);
    s.t = 0;
    return s;
}

void state_update(StreamState& s, std::span<const double> k_t,
                  std::span<const double> log_v_t) {
    const std::size_t d_k = s.d_k();
    const std::size_t d_v = s.d_v();
    if (k_t.size() != d_k || log_v_t.size() != d_v) {
        throw std::invalid_argument("token dimensions do not match state");
    }
    for (std::size_t a = 0; a < d_k; ++a) {
        const double ka = k_t[a];
        double* hs = s.h_s.row(a);
        for (std::size_t b = 0; b < d_v; ++b) {
            hs[b] = logadd(hs[b], ka + log_v_t[b]);
        }
        s.h_z[a] = logadd(s.h_z[a], ka);
    }
    ++s.t;
}

StreamStepOutput state_query_autoregressive(const StreamState& s,
                                            std::span<const double> q_t) {
    const std::size_t d_k = s.d_k();
    const std::size_t d_v = s.d_v();
    if (q_t.size() != d_k) {
        throw std::invalid_argument("query dimension does not match state");
    }
    if (s.t == 0) throw std::invalid_argument("empty context");
    StreamStepOutput out;
    out.log_s.resize(d_v);
    out.log_a.resize(d_v);
    out.log_z = lse_of_sum(q_t.data(), s.h_z.data(), d_k, 1);
    for (std::size_t b = 0; b < d_v; ++b) {
        out.log_s[b] = lse_of_sum(q_t.data(), s.h_s.data.data() + b, d_k, d_v);
        out.log_a[b] = out.log_s[b] - out.log_z;
    }
    return out;
}

LogAttentionOutput state_query_all(const StreamState& s, const Matrix2D& q) {
    const std::size_t d_k = s.d_k();
    const std::size_t d_v = s.d_v();
    if (q.cols != d_k) {
        throw std::invalid_argument("query dimension does not match state");
    }
    if (s.t == 0) throw std::invalid_argument("empty context");
    LogAttentionOutput out;
    out.log_s = Matrix2D(q.rows, d_v);
    out.log_z.assign(q.rows, 0.0);
    out.log_a = Matrix2D(q.rows, d_v);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < q.rows; ++i) {
        const double* qi = q.row(i);
        const double log_z = lse_of_sum(qi, s.h_z.data(), d_k, 1);
        out.log_z[i] = log_z;
        for (std::size_t b = 0; b < d_v; ++b) {
            const double log_s = lse_of_sum(qi, s.h_s.data.data() + b, d_k, d_v);
            out.log_s.at(i, b) = log_s;
            out.log_a.at(i, b) = log_s - log_z;
        }
    }
    return out;
}

StreamState state_combine(const StreamState& a, const StreamState& b) {
    if (a.d_k() != b.d_k() || a.d_v() != b.d_v()) {
        throw std::invalid_argument("state dimensions do not match");
    }
    StreamState out = a;
    for (std::size_t i = 0; i < out.h_s.data.size(); ++i) {
        out.h_s.data[i] = logadd(a.h_s.data[i], b.h_s.data[i]);
    }
    for (std::size_t i = 0; i < out.h_z.size(); ++i) {
        out.h_z[i] = logadd(a.h_z[i], b.h_z[i]);
    }
    out.t = a.t + b.t;
    return out;
}

StreamState build_state(const Matrix2D& k, const Matrix2D& log_v) {
    if (k.rows != log_v.rows) {
        throw std::invalid_argument("K and logV token counts differ");
    }
    StreamState s = state_init(k.cols, log_v.cols);
    for (std::size_t t = 0; t < k.rows; ++t) {
        state_update(s, std::span<const double>(k.row(t), k.cols),
                     std::span<const double>(log_v.row(t), log_v.cols));
    }
    return s;
}

StreamState build_state_chunked(const Matrix2D& k, const Matrix2D& log_v,
                                std::size_t chunk) {
    if (k.rows != log_v.rows) {
        throw std::invalid_argument("K and logV token counts differ");
    }
    if (chunk == 0) throw std::invalid_argument("chunk size must be positive");
    const std::size_t n = k.rows;
    if (n == 0) return state_init(k.cols, log_v.cols);
    const std::size_t n_chunks = (n + chunk - 1) / chunk;
    std::vector<StreamState> parts(n_chunks);
#pragma omp parallel for schedule(static)
    for (std::size_t ci = 0; ci < n_chunks; ++ci) {
        const std::size_t lo = ci * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        StreamState part = state_init(k.cols, log_v.cols);
        for (std::size_t t = lo; t < hi; ++t) {
            state_update(part, std::span<const double>(k.row(t), k.cols),
                         std::span<const double>(log_v.row(t), log_v.cols));
        }
        parts[ci] = std::move(part);
    }
    // Fixed left-to-right fold keeps the result deterministic for a given
    // chunk size.
    StreamState acc = state_init(k.cols, log_v.cols);
    for (StreamState& part : parts) acc = state_combine(acc, part);
    return acc;
}

std::size_t state_snapshot_bytes(const StreamState& s) {
    return 3 * 8 + 8 * (s.d_k() * s.d_v() + s.d_k());
}

void save_state(const StreamState& s, std::ostream& out) {
    put_u64(out, s.d_k());
    put_u64(out, s.d_v());
    put_u64(out, s.t);
    for (double v : s.h_s.data) put_f64(out, v);
    for (double v : s.h_z) put_f64(out, v);
    if (!out) throw StateIoError("snapshot write failed");
}

StreamState load_state(std::istream& in) {
    const std::uint64_t d_k = get_u64(in);
    const std::uint64_t d_v = get_u64(in);
    const std::uint64_t t = get_u64(in);
    if (d_k == 0 || d_v == 0 || d_k > kMaxSnapshotDim || d_v > kMaxSnapshotDim) {
        throw StateIoError("corrupt snapshot header");
    }
    StreamState s = state_init(d_k, d_v);
    s.t = t;
    for (double& v : s.h_s.data) v = get_f64(in);
    for (double& v : s.h_z) v = get_f64(in);
    for (double v : s.h_s.data) {
        if (std::isnan(v) || (std::isinf(v) && v > 0.0)) {
            throw StateIoError("corrupt snapshot payload");
        }
    }
    for (double v : s.h_z) {
        if (std::isnan(v) || (std::isinf(v) && v > 0.0)) {
            throw StateIoError("corrupt snapshot payload");
        }
    }
    if (t == 0) {
        for (double v : s.h_s.data) {
            if (v != kNegInf) throw StateIoError("corrupt snapshot payload");
        }
        for (double v : s.h_z) {
            if (v != kNegInf) throw StateIoError("corrupt snapshot payload");
        }
    }
    return s;
}

void save_state_file(const StreamState& s, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw StateIoError("cannot open snapshot for writing: " + path);
    save_state(s, f);
    f.flush();
    if (!f) throw StateIoError("snapshot write failed: " + path);
}

StreamState load_state_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw StateIoError("cannot open snapshot: " + path);
    StreamState s = load_state(f);
    if (f.peek() != std::ifstream::traits_type::eof()) {
        throw StateIoError("snapshot has trailing bytes: " + path);
    }
    return s;
}

}  // namespace logattn
