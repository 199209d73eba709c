#include <doctest.h>

#include <cmath>

#include "survbias/error.hpp"
#include "survbias/survcore/bias.hpp"

using namespace survbias;

TEST_CASE("published application numbers give 36% bias and 93% elimination") {
    const auto r = bias_metrics(2.15, 1.63, 2.11);
    REQUIRE(r.percent_bias_unadjusted);
    REQUIRE(r.percent_bias_eliminated);
    CHECK(*r.percent_bias_unadjusted == doctest::Approx(36.2).epsilon(0.1 / 36.2));
    CHECK(*r.percent_bias_eliminated == doctest::Approx(93.2).epsilon(0.1 / 93.2));
    // Independent restatement of the invariant.
    const double expected = 100.0 * (1.0 - (std::log(2.15) - std::log(2.11)) / (std::log(2.15) - std::log(1.63)));
    CHECK(*r.percent_bias_eliminated == doctest::Approx(expected));
}

TEST_CASE("exact recovery eliminates all bias") {
    const auto r = bias_metrics(1.5, 1.1, 1.5);
    CHECK(*r.percent_bias_eliminated == doctest::Approx(100.0));
}

TEST_CASE("undefined metrics and invalid inputs") {
    const auto same = bias_metrics(1.5, 1.5, 1.4);
    CHECK_FALSE(same.percent_bias_eliminated.has_value());
    CHECK(same.percent_bias_unadjusted.has_value());
    CHECK_FALSE(bias_metrics(1.0, 0.9, 1.0).percent_bias_unadjusted.has_value());
    CHECK_THROWS_AS(bias_metrics(0.0, 1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(bias_metrics(1.0, -1.0, 1.0), ConfigError);
}
