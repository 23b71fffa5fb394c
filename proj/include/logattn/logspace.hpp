#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "logattn/matrix.hpp"

namespace logattn {

// Which index a reduction or scan walks: Axis::Cols moves along the column
// index within each row, Axis::Rows moves along the row index within each
// column.
enum class Axis { Rows, Cols };

// log(exp(a) + exp(b)) = hi + log1p(exp(lo - hi)), so the argument of exp is
// always <= 0 and nothing overflows. kNegInf is a two-sided identity,
// bit-exactly: logadd(kNegInf, b) == b.
inline double logadd(double a, double b) {
    const double hi = a < b ? b : a;
    const double lo = a < b ? a : b;
    if (hi == kNegInf) return kNegInf;
    if (lo == kNegInf) return hi;
    return hi + std::log1p(std::exp(lo - hi));
}

// log sum exp of x[0], x[stride], ..., x[(n-1)*stride], max-subtracted.
// A slice that is entirely kNegInf reduces to kNegInf without touching
// infinite arithmetic. Throws on n == 0 (log of an empty sum).
inline double lse(const double* x, std::size_t n, std::size_t stride = 1) {
    if (n == 0) throw std::invalid_argument("empty reduction");
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i) {
        const double v = x[i * stride];
        if (v > m) m = v;
    }
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i * stride] - m);
    return m + std::log(s);
}

// lse over i of x[i] + y[i * y_stride]: the fused reduction the kernels use
// to resolve a query row against an accumulator column. n must be >= 1;
// x entries must be finite, y entries finite or kNegInf.
inline double lse_of_sum(const double* x, const double* y, std::size_t n,
                         std::size_t y_stride) {
    double m = kNegInf;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i] + y[i * y_stride];
        if (v > m) m = v;
    }
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] + y[i * y_stride] - m);
    return m + std::log(s);
}

// Reduce one axis away. lse_over_axis(m, Axis::Cols)[i] = lse of row i;
// lse_over_axis(m, Axis::Rows)[j] = lse of column j.
std::vector<LogReal> lse_over_axis(const Matrix2D& m, Axis axis);

// Prefix lse along the given axis; same shape as the input. The first slice
// of the scan is copied verbatim, later entries fold in with logadd,
// left to right.
Matrix2D lcse_over_axis(const Matrix2D& m, Axis axis);

}  // namespace logattn
