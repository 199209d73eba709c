#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "survbias/error.hpp"
#include "survbias/survcore/spline.hpp"

using namespace survbias;

namespace {

double column_at(const SplineSpec& spec, double x, Eigen::Index col) {
    const double v = x;
    return rcs_basis(std::span(&v, 1), spec)(0, col);
}

}  // namespace

TEST_CASE("basis layout and golden value for knots (0, 5, 10)") {
    const SplineSpec spec({0.0, 5.0, 10.0});
    CHECK(spec.basis_dimension() == 2);
    // (5 - 0)^3 with no truncated terms active, over (10 - 0)^2.
    CHECK(column_at(spec, 5.0, 1) == doctest::Approx(1.25));
    CHECK(column_at(spec, 5.0, 0) == doctest::Approx(5.0));
    // x = 12: 12^3 - 7^3 * 10/5 + 2^3 * 5/5 = 1728 - 686 + 8 = 1050 -> 10.5
    CHECK(column_at(spec, 12.0, 1) == doctest::Approx(10.5));
}

TEST_CASE("nonlinear columns vanish at or below the first knot") {
    const SplineSpec spec({1.0, 2.0, 4.0, 7.0, 11.0});
    const std::vector<double> xs = {-100.0, -1.0, 0.0, 0.5, 1.0};
    const auto b = rcs_basis(xs, spec);
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        for (Eigen::Index j = 1; j < b.cols(); ++j) CHECK(b(i, j) == 0.0);
    }
}

TEST_CASE("linear beyond the last knot and smooth through every knot") {
    const SplineSpec spec({0.5, 2.0, 3.5, 8.0, 9.0});
    const auto f = [&](double x, Eigen::Index j) { return column_at(spec, x, j); };
    for (Eigen::Index j = 0; j < 4; ++j) {
        const double x = 9.0 + 10.0;
        const double h = 1e-2;
        const double second = (f(x + h, j) - 2 * f(x, j) + f(x - h, j)) / (h * h);
        CHECK(std::abs(second) < 1e-6);
        for (double t : spec.knots()) {
            const double e = 1e-6;
            CHECK(std::abs(f(t + e, j) - f(t - e, j)) < 100 * e);
            // First and second derivatives from either side agree.
            const double g = 1e-4;
            const double d_left = (f(t, j) - f(t - g, j)) / g;
            const double d_right = (f(t + g, j) - f(t, j)) / g;
            CHECK(std::abs(d_left - d_right) < 1e-3);
            const double s_left = (f(t - 2 * g, j) - 2 * f(t - g, j) + f(t, j)) / (g * g);
            const double s_right = (f(t, j) - 2 * f(t + g, j) + f(t + 2 * g, j)) / (g * g);
            CHECK(std::abs(s_left - s_right) < 1e-2);
        }
    }
}

TEST_CASE("invalid spline specifications") {
    CHECK_THROWS_AS(SplineSpec({1.0, 2.0}), ConfigError);
    CHECK_THROWS_AS(SplineSpec({1.0, 1.0, 2.0}), ConfigError);
    CHECK_THROWS_AS(SplineSpec({3.0, 2.0, 4.0}), ConfigError);
}

TEST_CASE("default knots at quantiles") {
    std::vector<double> grid;
    for (int i = 0; i <= 100; ++i) grid.push_back(i);
    const auto spec = default_knots(grid, 3);
    CHECK(spec.knots()[0] == doctest::Approx(10.0));
    CHECK(spec.knots()[1] == doctest::Approx(50.0));
    CHECK(spec.knots()[2] == doctest::Approx(90.0));

    SUBCASE("exponential sample against order statistics") {
        std::mt19937_64 rng(17);
        std::exponential_distribution<double> ex(0.1);
        std::vector<double> v(1001);
        for (auto& x : v) x = ex(rng);
        const auto k5 = default_knots(v, 5);
        // 1001 values: the q-quantile sits exactly on order statistic 1000 q.
        auto sorted = v;
        std::sort(sorted.begin(), sorted.end());
        const std::vector<std::size_t> ranks = {50, 275, 500, 725, 950};
        for (std::size_t i = 0; i < 5; ++i) CHECK(k5.knots()[i] == doctest::Approx(sorted[ranks[i]]));
    }
    SUBCASE("all values equal") {
        const std::vector<double> same(50, 3.0);
        CHECK_THROWS_AS(default_knots(same, 3), DataError);
    }
    SUBCASE("tied quantiles are nudged to the next distinct value") {
        std::vector<double> v(100, 0.0);
        v[97] = 1.0;
        v[98] = 2.0;
        v[99] = 3.0;
        const auto s = default_knots(v, 3);
        CHECK(s.knots()[0] == 0.0);
        CHECK(s.knots()[1] == 1.0);
        CHECK(s.knots()[2] == 2.0);
    }
    SUBCASE("unsupported knot count") { CHECK_THROWS_AS(default_knots(grid, 9), ConfigError); }
}
