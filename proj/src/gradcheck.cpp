#include "logattn/gradcheck.hpp"

#include <quadmath.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "logattn/logspace.hpp"

namespace logattn {

namespace {

void check_cotangent(const AttentionInputs& in, const Matrix2D& cot) {
    if (cot.rows != in.n_q() || cot.cols != in.d_v()) {
        throw std::invalid_argument("cotangent shape mismatch");
    }
    for (double v : cot.data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("cotangent entries must be finite");
        }
    }
}

using quad = __float128;

quad logadd_quad(quad a, quad b) {
    const quad hi = a < b ? b : a;
    const quad lo = a < b ? a : b;
    if (isinfq(lo) && lo < 0) return hi;
    return hi + log1pq(expq(lo - hi));
}

quad lse_of_sum_quad(const double* x, const quad* y, std::size_t n,
                     std::size_t stride) {
    quad m = (quad)x[0] + y[0];
    for (std::size_t a = 1; a < n; ++a) {
        const quad s = (quad)x[a] + y[a * stride];
        if (s > m) m = s;
    }
    if (isinfq(m) && m < 0) return m;
    quad acc = 0;
    for (std::size_t a = 0; a < n; ++a) {
        acc += expq((quad)x[a] + y[a * stride] - m);
    }
    return m + logq(acc);
}

// L = sum(cot * log_a), with the noncausal forward recurrence evaluated
// entirely in quad precision.
quad loss_quad(const AttentionInputs& in, const Matrix2D& cot) {
    const std::size_t n_q = in.n_q();
    const std::size_t n_k = in.n_k();
    const std::size_t d_k = in.d_k();
    const std::size_t d_v = in.d_v();
    const quad neg_inf = (quad)kNegInf;

    std::vector<quad> h_s(d_k * d_v, neg_inf);
    std::vector<quad> h_z(d_k, neg_inf);
    for (std::size_t a = 0; a < d_k; ++a) {
        quad* hs = h_s.data() + a * d_v;
        quad z = neg_inf;
        for (std::size_t t = 0; t < n_k; ++t) {
            const quad ka = (quad)in.k.at(t, a);
            z = logadd_quad(z, ka);
            const double* lv = in.log_v.row(t);
            for (std::size_t b = 0; b < d_v; ++b) {
                hs[b] = logadd_quad(hs[b], ka + (quad)lv[b]);
            }
        }
        h_z[a] = z;
    }

    quad loss = 0;
    for (std::size_t i = 0; i < n_q; ++i) {
        const double* qi = in.q.row(i);
        const double* ci = cot.row(i);
        const quad log_z = lse_of_sum_quad(qi, h_z.data(), d_k, 1);
        for (std::size_t b = 0; b < d_v; ++b) {
            const quad log_s = lse_of_sum_quad(qi, h_s.data() + b, d_k, d_v);
            loss += (quad)ci[b] * (log_s - log_z);
        }
    }
    return loss;
}

}  // namespace

AttentionGradients backward_logspace_noncausal(const AttentionInputs& in,
                                               const Matrix2D& cotangent) {
    in.validate();
    check_cotangent(in, cotangent);
    const std::size_t n_q = in.n_q();
    const std::size_t n_k = in.n_k();
    const std::size_t d_k = in.d_k();
    const std::size_t d_v = in.d_v();
    if (n_k == 0) throw std::invalid_argument("empty context");
    for (double v : in.log_v.data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("backward requires finite logV");
        }
    }

    // Forward intermediates.
    Matrix2D h_s(d_k, d_v, kNegInf);
    std::vector<double> h_z(d_k, kNegInf);
    for (std::size_t a = 0; a < d_k; ++a) {
        double* hs = h_s.row(a);
        double z = kNegInf;
        for (std::size_t t = 0; t < n_k; ++t) {
            const double ka = in.k.at(t, a);
            z = logadd(z, ka);
            const double* lv = in.log_v.row(t);
            for (std::size_t b = 0; b < d_v; ++b) {
                hs[b] = logadd(hs[b], ka + lv[b]);
            }
        }
        h_z[a] = z;
    }
    Matrix2D log_s(n_q, d_v);
    std::vector<double> log_z(n_q);
    for (std::size_t i = 0; i < n_q; ++i) {
        const double* qi = in.q.row(i);
        log_z[i] = lse_of_sum(qi, h_z.data(), d_k, 1);
        for (std::size_t b = 0; b < d_v; ++b) {
            log_s.at(i, b) = lse_of_sum(qi, h_s.data.data() + b, d_k, d_v);
        }
    }

    // Backward. dlog_s = cot, dlog_z = -sum_b cot; each lse pushes its
    // cotangent onto the inputs weighted by the softmax of those inputs.
    AttentionGradients g;
    g.grad_q = Matrix2D(n_q, d_k, 0.0);
    g.grad_k = Matrix2D(n_k, d_k, 0.0);
    g.grad_log_v = Matrix2D(n_k, d_v, 0.0);
    Matrix2D d_hs(d_k, d_v, 0.0);
    std::vector<double> d_hz(d_k, 0.0);

    for (std::size_t i = 0; i < n_q; ++i) {
        const double* qi = in.q.row(i);
        const double* ci = cotangent.row(i);
        double cot_row_sum = 0.0;
        for (std::size_t b = 0; b < d_v; ++b) cot_row_sum += ci[b];
        for (std::size_t a = 0; a < d_k; ++a) {
            const double wz = std::exp(qi[a] + h_z[a] - log_z[i]);
            g.grad_q.at(i, a) -= cot_row_sum * wz;
            d_hz[a] -= cot_row_sum * wz;
            const double* hs = h_s.row(a);
            double* dhs = d_hs.row(a);
            for (std::size_t b = 0; b < d_v; ++b) {
                const double ws = std::exp(qi[a] + hs[b] - log_s.at(i, b));
                g.grad_q.at(i, a) += ci[b] * ws;
                dhs[b] += ci[b] * ws;
            }
        }
    }
    for (std::size_t t = 0; t < n_k; ++t) {
        const double* lv = in.log_v.row(t);
        for (std::size_t a = 0; a < d_k; ++a) {
            const double ka = in.k.at(t, a);
            double dk_acc = d_hz[a] * std::exp(ka - h_z[a]);
            const double* hs = h_s.row(a);
            const double* dhs = d_hs.row(a);
            for (std::size_t b = 0; b < d_v; ++b) {
                const double r = std::exp(ka + lv[b] - hs[b]);
                dk_acc += dhs[b] * r;
                g.grad_log_v.at(t, b) += dhs[b] * r;
            }
            g.grad_k.at(t, a) += dk_acc;
        }
    }
    return g;
}

AttentionGradients finite_difference_oracle(const AttentionInputs& in,
                                            const Matrix2D& cotangent,
                                            double step) {
    if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
    in.validate();
    check_cotangent(in, cotangent);

    AttentionGradients g;
    g.grad_q = Matrix2D(in.n_q(), in.d_k(), 0.0);
    g.grad_k = Matrix2D(in.n_k(), in.d_k(), 0.0);
    g.grad_log_v = Matrix2D(in.n_k(), in.d_v(), 0.0);

    AttentionInputs work = in;
    auto central = [&](Matrix2D& field, Matrix2D& grad) {
        for (std::size_t idx = 0; idx < field.data.size(); ++idx) {
            const double orig = field.data[idx];
            const double up = orig + step;
            const double down = orig - step;
            field.data[idx] = up;
            const quad lp = loss_quad(work, cotangent);
            field.data[idx] = down;
            const quad lm = loss_quad(work, cotangent);
            field.data[idx] = orig;
            // up - down is the step the losses actually saw, not 2 * step.
            grad.data[idx] = (double)((lp - lm) / ((quad)up - (quad)down));
        }
    };
    central(work.q, g.grad_q);
    central(work.k, g.grad_k);
    central(work.log_v, g.grad_log_v);
    return g;
}

double gradient_rel_error(const AttentionGradients& a,
                          const AttentionGradients& b) {
    auto field_err = [](const Matrix2D& x, const Matrix2D& y) {
        double worst = 0.0;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double scale =
                std::max({std::fabs(x.data[i]), std::fabs(y.data[i]), 1e-8});
            worst = std::max(worst, std::fabs(x.data[i] - y.data[i]) / scale);
        }
        return worst;
    };
    double worst = field_err(a.grad_q, b.grad_q);
    worst = std::max(worst, field_err(a.grad_k, b.grad_k));
    worst = std::max(worst, field_err(a.grad_log_v, b.grad_log_v));
    return worst;
}

}  // namespace logattn
