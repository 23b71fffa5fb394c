#include "logattn/logspace.hpp"

namespace logattn {

std::vector<LogReal> lse_over_axis(const Matrix2D& m, Axis axis) {
    if (axis == Axis::Cols) {
        if (m.cols == 0) throw std::invalid_argument("empty reduction");
        std::vector<LogReal> out(m.rows);
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < m.rows; ++i) {
            out[i] = lse(m.row(i), m.cols);
        }
        return out;
    }
    if (m.rows == 0) throw std::invalid_argument("empty reduction");
    std::vector<LogReal> out(m.cols);
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < m.cols; ++j) {
        out[j] = lse(m.data.data() + j, m.rows, m.cols);
    }
    return out;
}

Matrix2D lcse_over_axis(const Matrix2D& m, Axis axis) {
    Matrix2D out(m.rows, m.cols);
    if (axis == Axis::Cols) {
        if (m.cols == 0) throw std::invalid_argument("empty reduction");
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < m.rows; ++i) {
            const double* src = m.row(i);
            double* dst = out.row(i);
            dst[0] = src[0];
            for (std::size_t j = 1; j < m.cols; ++j) {
                dst[j] = logadd(dst[j - 1], src[j]);
            }
        }
        return out;
    }
    if (m.rows == 0) throw std::invalid_argument("empty reduction");
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < m.cols; ++j) {
        out.at(0, j) = m.at(0, j);
        for (std::size_t i = 1; i < m.rows; ++i) {
            out.at(i, j) = logadd(out.at(i - 1, j), m.at(i, j));
        }
    }
    return out;
}

}  // namespace logattn
