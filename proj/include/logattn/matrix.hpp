#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace logattn {

// Log-domain scalar. kNegInf encodes an exact zero of the exponentiated
// domain; well-formed values are never NaN and never +inf.
using LogReal = double;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Dense row-major 2-D array of doubles.
struct Matrix2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix2D() = default;
    Matrix2D(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    std::size_t size() const { return data.size(); }
};

}  // namespace logattn
