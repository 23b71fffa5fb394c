#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "logattn/logspace.hpp"
#include "logattn/matrix.hpp"

using namespace logattn;

namespace {

// log(exp x_1 + ... + exp x_n) evaluated with no stabilization at all. Only
// usable well inside the exp range, which is exactly why it is a fair
// independent oracle there.
double direct_lse(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += std::exp(x);
    return std::log(s);
}

double unit_draw(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double draw(std::mt19937_64& rng, double range) {
    return (2.0 * unit_draw(rng) - 1.0) * range;
}

}  // namespace

TEST_CASE("logadd treats kNegInf as a bit-exact identity") {
    CHECK(logadd(kNegInf, 3.5) == 3.5);
    CHECK(logadd(3.5, kNegInf) == 3.5);
    CHECK(logadd(kNegInf, -1234.25) == -1234.25);
    CHECK(logadd(kNegInf, kNegInf) == kNegInf);
}

TEST_CASE("logadd of equal logits adds log 2") {
    CHECK(logadd(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(logadd(700.0, 700.0) ==
          doctest::Approx(700.0 + std::log(2.0)).epsilon(1e-15));
    // exp(-745) underflows to 0, so the direct formula would return -inf here.
    CHECK(logadd(-745.0, -745.0) ==
          doctest::Approx(-745.0 + std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("logadd matches the direct formula in the safe range") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const double a = draw(rng, 10.0);
        const double b = draw(rng, 10.0);
        CHECK(logadd(a, b) ==
              doctest::Approx(direct_lse({a, b})).epsilon(1e-13));
    }
}

TEST_CASE("logadd is commutative and associative") {
    std::mt19937_64 rng(11);
    double comm = 0.0;
    double assoc = 0.0;
    double vs_direct = 0.0;
    for (int i = 0; i < 500; ++i) {
        const double a = draw(rng, 10.0);
        const double b = draw(rng, 10.0);
        const double c = draw(rng, 10.0);
        comm = std::max(comm, std::fabs(logadd(a, b) - logadd(b, a)));
        const double left = logadd(logadd(a, b), c);
        const double right = logadd(a, logadd(b, c));
        assoc = std::max(assoc, std::fabs(left - right));
        vs_direct = std::max(vs_direct, std::fabs(left - direct_lse({a, b, c})));
    }
    CHECK(comm <= 1e-12);
    CHECK(assoc <= 1e-12);
    CHECK(vs_direct <= 1e-12);
}

TEST_CASE("lse hand examples") {
    {
        const double x[] = {0.0, 0.0};
        CHECK(lse(x, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    }
    {
        const double x[] = {4.25};
        CHECK(lse(x, 1) == 4.25);  // single element is bit-exact
    }
    {
        const double x[] = {1000.0, 1000.0};
        const double r = lse(x, 2);
        CHECK(std::isfinite(r));
        CHECK(r == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
    }
    {
        const double x[] = {kNegInf, kNegInf, kNegInf};
        CHECK(lse(x, 3) == kNegInf);
    }
    {
        const double x[] = {kNegInf, 0.0, kNegInf};
        CHECK(lse(x, 3) == 0.0);
    }
}

TEST_CASE("lse of an empty slice throws") {
    const double* x = nullptr;
    CHECK_THROWS_WITH_AS(lse(x, 0), "empty reduction", std::invalid_argument);
}

TEST_CASE("lse matches the direct formula and shift covariance") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> x(1 + rng() % 12);
        for (double& v : x) v = draw(rng, 8.0);
        const double r = lse(x.data(), x.size());
        CHECK(r == doctest::Approx(direct_lse(x)).epsilon(1e-13));

        const double alpha = draw(rng, 8.0);
        std::vector<double> shifted = x;
        for (double& v : shifted) v += alpha;
        CHECK(lse(shifted.data(), shifted.size()) ==
              doctest::Approx(r + alpha).epsilon(1e-12));
    }
}

TEST_CASE("lse strided access equals a packed copy") {
    std::mt19937_64 rng(17);
    std::vector<double> buf(24);
    for (double& v : buf) v = draw(rng, 5.0);
    std::vector<double> packed;
    for (std::size_t i = 0; i < buf.size(); i += 3) packed.push_back(buf[i]);
    CHECK(lse(buf.data(), packed.size(), 3) ==
          lse(packed.data(), packed.size()));
}

TEST_CASE("lse_of_sum equals lse of the elementwise sum") {
    std::mt19937_64 rng(19);
    const std::size_t n = 9;
    std::vector<double> x(n), y(2 * n);
    for (double& v : x) v = draw(rng, 5.0);
    for (double& v : y) v = draw(rng, 5.0);
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[2 * i];
    CHECK(lse_of_sum(x.data(), y.data(), n, 2) == lse(z.data(), n));

    std::vector<double> all_zero(n, kNegInf);
    CHECK(lse_of_sum(x.data(), all_zero.data(), n, 1) == kNegInf);
}

TEST_CASE("lse_over_axis reduces the chosen axis") {
    Matrix2D m(2, 3);
    m.at(0, 0) = 0.0;
    m.at(0, 1) = 0.0;
    m.at(0, 2) = 0.0;
    m.at(1, 0) = 1.0;
    m.at(1, 1) = 2.0;
    m.at(1, 2) = 3.0;

    const auto per_row = lse_over_axis(m, Axis::Cols);
    REQUIRE(per_row.size() == 2);
    CHECK(per_row[0] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    CHECK(per_row[1] ==
          doctest::Approx(direct_lse({1.0, 2.0, 3.0})).epsilon(1e-13));

    const auto per_col = lse_over_axis(m, Axis::Rows);
    REQUIRE(per_col.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(per_col[j] ==
              doctest::Approx(direct_lse({m.at(0, j), m.at(1, j)}))
                  .epsilon(1e-13));
    }
}

TEST_CASE("lse_over_axis rejects an empty reduced axis") {
    Matrix2D no_cols(3, 0);
    CHECK_THROWS_WITH_AS(lse_over_axis(no_cols, Axis::Cols), "empty reduction",
                         std::invalid_argument);
    Matrix2D no_rows(0, 3);
    CHECK_THROWS_WITH_AS(lse_over_axis(no_rows, Axis::Rows), "empty reduction",
                         std::invalid_argument);
}

TEST_CASE("lcse hand examples") {
    Matrix2D m(1, 3, 0.0);
    const Matrix2D out = lcse_over_axis(m, Axis::Cols);
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(out.at(0, 2) == doctest::Approx(std::log(3.0)).epsilon(1e-15));

    Matrix2D single(1, 1);
    single.at(0, 0) = -2.75;
    CHECK(lcse_over_axis(single, Axis::Cols).at(0, 0) == -2.75);
    CHECK(lcse_over_axis(single, Axis::Rows).at(0, 0) == -2.75);
}

TEST_CASE("lcse along rows scans down each column") {
    Matrix2D m(2, 2);
    m.at(0, 0) = std::log(1.0);
    m.at(0, 1) = std::log(2.0);
    m.at(1, 0) = std::log(3.0);
    m.at(1, 1) = std::log(4.0);
    const Matrix2D out = lcse_over_axis(m, Axis::Rows);
    CHECK(out.at(0, 0) == m.at(0, 0));
    CHECK(out.at(0, 1) == m.at(0, 1));
    CHECK(out.at(1, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(out.at(1, 1) == doctest::Approx(std::log(6.0)).epsilon(1e-14));
}

TEST_CASE("lcse prefixes match per-prefix lse") {
    std::mt19937_64 rng(23);
    Matrix2D m(1, 8);
    for (double& v : m.data) v = draw(rng, 10.0);
    const Matrix2D scan = lcse_over_axis(m, Axis::Cols);
    for (std::size_t k = 1; k <= 8; ++k) {
        CHECK(scan.at(0, k - 1) ==
              doctest::Approx(lse(m.row(0), k)).epsilon(1e-12));
        const std::vector<double> prefix(m.row(0), m.row(0) + k);
        CHECK(scan.at(0, k - 1) ==
              doctest::Approx(direct_lse(prefix)).epsilon(1e-12));
    }
}

TEST_CASE("lcse first slice is copied verbatim") {
    std::mt19937_64 rng(29);
    Matrix2D m(4, 5);
    for (double& v : m.data) v = draw(rng, 50.0);
    m.at(0, 2) = kNegInf;
    m.at(1, 0) = kNegInf;

    const Matrix2D by_cols = lcse_over_axis(m, Axis::Cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        CHECK(by_cols.at(i, 0) == m.at(i, 0));
    }
    const Matrix2D by_rows = lcse_over_axis(m, Axis::Rows);
    for (std::size_t j = 0; j < m.cols; ++j) {
        CHECK(by_rows.at(0, j) == m.at(0, j));
    }
}

TEST_CASE("lcse final slice equals the full lse") {
    std::mt19937_64 rng(31);
    Matrix2D m(5, 7);
    for (double& v : m.data) v = draw(rng, 20.0);
    const auto per_row = lse_over_axis(m, Axis::Cols);
    const Matrix2D scan = lcse_over_axis(m, Axis::Cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        CHECK(scan.at(i, m.cols - 1) ==
              doctest::Approx(per_row[i]).epsilon(1e-12));
    }
}

TEST_CASE("log-space reductions never produce NaN or +inf") {
    std::mt19937_64 rng(37);
    Matrix2D m(6, 6);
    for (double& v : m.data) v = draw(rng, 700.0);
    m.at(0, 0) = kNegInf;
    m.at(3, 3) = kNegInf;
    for (Axis axis : {Axis::Cols, Axis::Rows}) {
        for (double v : lse_over_axis(m, axis)) {
            CHECK((std::isfinite(v) || v == kNegInf));
        }
        for (double v : lcse_over_axis(m, axis).data) {
            CHECK((std::isfinite(v) || v == kNegInf));
        }
    }
}
