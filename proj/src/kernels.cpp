#include "logattn/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "logattn/logspace.hpp"

namespace logattn {

namespace {

void check_storage(const Matrix2D& m, const char* name) {
    if (m.data.size() != m.rows * m.cols) {
        throw std::invalid_argument(std::string(name) +
                                    " storage does not match its shape");
    }
}

LogAttentionOutput make_output(std::size_t n_q, std::size_t d_v) {
    LogAttentionOutput out;
    out.log_s = Matrix2D(n_q, d_v);
    out.log_z.assign(n_q, 0.0);
    out.log_a = Matrix2D(n_q, d_v);
    return out;
}

// Fold every token into the d_k x d_v value accumulator and the d_k
// normalizer accumulator, left to right over tokens. Accumulator cells are
// independent, so the loop over features runs in parallel.
void accumulate_context(const Matrix2D& k, const Matrix2D& log_v,
                        Matrix2D& h_s, std::vector<double>& h_z) {
    const std::size_t n_k = k.rows;
    const std::size_t d_k = k.cols;
    const std::size_t d_v = log_v.cols;
    h_s = Matrix2D(d_k, d_v, kNegInf);
    h_z.assign(d_k, kNegInf);
#pragma omp parallel for schedule(static)
    for (std::size_t a = 0; a < d_k; ++a) {
        double* hs_row = h_s.row(a);
        double z = kNegInf;
        for (std::size_t t = 0; t < n_k; ++t) {
            const double ka = k.at(t, a);
            z = logadd(z, ka);
            const double* lv = log_v.row(t);
            for (std::size_t b = 0; b < d_v; ++b) {
                hs_row[b] = logadd(hs_row[b], ka + lv[b]);
            }
        }
        h_z[a] = z;
    }
}

}  // namespace

void AttentionInputs::validate() const {
    check_storage(q, "Q");
    check_storage(k, "K");
    check_storage(log_v, "logV");
    if (q.cols != k.cols) {
        throw std::invalid_argument("Q and K feature dimensions differ");
    }
    if (k.rows != log_v.rows) {
        throw std::invalid_argument("K and logV token counts differ");
    }
    if (q.cols == 0 || log_v.cols == 0) {
        throw std::invalid_argument("feature dimensions must be positive");
    }
    for (double v : q.data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("Q entries must be finite");
        }
    }
    for (double v : k.data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("K entries must be finite");
        }
    }
    for (double v : log_v.data) {
        if (std::isnan(v) || (std::isinf(v) && v > 0.0)) {
            throw std::invalid_argument("logV entries must be finite or -inf");
        }
    }
}

LogAttentionOutput attention_quadratic_reference(const AttentionInputs& in,
                                                 double c,
                                                 Matrix2D* weights_out) {
    in.validate();
    const std::size_t n_q = in.n_q();
    const std::size_t n_k = in.n_k();
    const std::size_t d_k = in.d_k();
    const std::size_t d_v = in.d_v();
    if (n_k == 0) throw std::invalid_argument("empty context");

    LogAttentionOutput out = make_output(n_q, d_v);
    if (weights_out) *weights_out = Matrix2D(n_q, n_k);

    std::vector<double> logits(n_k);
    std::vector<double> mixed(d_v);
    for (std::size_t i = 0; i < n_q; ++i) {
        const double* qi = in.q.row(i);
        for (std::size_t t = 0; t < n_k; ++t) {
            // log of the dot-product of exponentials, then the shift by c
            logits[t] = lse_of_sum(qi, in.k.row(t), d_k, 1) - c;
        }
        const double log_z = lse(logits.data(), n_k);
        mixed.assign(d_v, 0.0);
        for (std::size_t t = 0; t < n_k; ++t) {
            const double w = std::exp(logits[t] - log_z);
            if (weights_out) weights_out->at(i, t) = w;
            const double* lv = in.log_v.row(t);
            for (std::size_t j = 0; j < d_v; ++j) {
                mixed[j] += w * std::exp(lv[j]);
            }
        }
        out.log_z[i] = log_z;
        for (std::size_t j = 0; j < d_v; ++j) {
            const double la = std::log(mixed[j]);  // log(0) = -inf is fine
            out.log_a.at(i, j) = la;
            out.log_s.at(i, j) = la + log_z;
        }
    }
    return out;
}

LogAttentionOutput attention_logspace_noncausal(const AttentionInputs& in) {
    in.validate();
    const std::size_t n_q = in.n_q();
    const std::size_t n_k = in.n_k();
    const std::size_t d_k = in.d_k();
    const std::size_t d_v = in.d_v();
    if (n_k == 0) throw std::invalid_argument("empty context");

    Matrix2D h_s;
    std::vector<double> h_z;
    accumulate_context(in.k, in.log_v, h_s, h_z);

    LogAttentionOutput out = make_output(n_q, d_v);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n_q; ++i) {
        const double* qi = in.q.row(i);
        const double log_z = lse_of_sum(qi, h_z.data(), d_k, 1);
        out.log_z[i] = log_z;
        for (std::size_t b = 0; b < d_v; ++b) {
            const double log_s = lse_of_sum(qi, h_s.data.data() + b, d_k, d_v);
            out.log_s.at(i, b) = log_s;
            out.log_a.at(i, b) = log_s - log_z;
        }
    }
    return out;
}

LogAttentionOutput attention_logspace_causal(const AttentionInputs& in) {
    in.validate();
    if (in.n_q() != in.n_k()) {
        throw std::invalid_argument("causal requires square context");
    }
    const std::size_t n = in.n_k();
    const std::size_t d_k = in.d_k();
    const std::size_t d_v = in.d_v();
    if (n == 0) throw std::invalid_argument("empty context");

    // Prefix scan states for every step: cum_s[(a*n + t)*d_v + b] and
    // cum_z[a*n + t]. Each (feature, value) cell scans its own lane, so the
    // scans run in parallel over features.
    std::vector<double> cum_s(d_k * n * d_v);
    std::vector<double> cum_z(d_k * n);
#pragma omp parallel for schedule(static)
    for (std::size_t a = 0; a < d_k; ++a) {
        double* z_lane = cum_z.data() + a * n;
        double* s_lane = cum_s.data() + a * n * d_v;
        const double k0 = in.k.at(0, a);
        z_lane[0] = k0;
        const double* lv0 = in.log_v.row(0);
        for (std::size_t b = 0; b < d_v; ++b) s_lane[b] = k0 + lv0[b];
        for (std::size_t t = 1; t < n; ++t) {
            const double ka = in.k.at(t, a);
            z_lane[t] = logadd(z_lane[t - 1], ka);
            const double* prev = s_lane + (t - 1) * d_v;
            double* cur = s_lane + t * d_v;
            const double* lv = in.log_v.row(t);
            for (std::size_t b = 0; b < d_v; ++b) {
                cur[b] = logadd(prev[b], ka + lv[b]);
            }
        }
    }

    LogAttentionOutput out = make_output(n, d_v);
#pragma omp parallel for schedule(static)
    for (std::size_t t = 0; t < n; ++t) {
        const double* qt = in.q.row(t);
        const double log_z = lse_of_sum(qt, cum_z.data() + t, d_k, n);
        out.log_z[t] = log_z;
        for (std::size_t b = 0; b < d_v; ++b) {
            const double log_s =
                lse_of_sum(qt, cum_s.data() + t * d_v + b, d_k, n * d_v);
            out.log_s.at(t, b) = log_s;
            out.log_a.at(t, b) = log_s - log_z;
        }
    }
    return out;
}

}  // namespace logattn
