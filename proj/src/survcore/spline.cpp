#include "survbias/survcore/spline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "survbias/error.hpp"

namespace survbias {

SplineSpec::SplineSpec(std::vector<double> knots) : knots_(std::move(knots)) {
    if (knots_.size() < 3) throw ConfigError("restricted cubic spline needs at least 3 knots");
    for (std::size_t i = 0; i < knots_.size(); ++i) {
        if (!std::isfinite(knots_[i])) throw ConfigError("spline knots must be finite");
        if (i > 0 && !(knots_[i] > knots_[i - 1])) {
            throw ConfigError("spline knots must be strictly increasing");
        }
    }
}

Eigen::MatrixXd rcs_basis(std::span<const double> values, const SplineSpec& spec) {
    const auto& t = spec.knots();
    const std::size_t k = t.size();
    const double last = t[k - 1];
    const double penultimate = t[k - 2];
    const double norm = (last - t[0]) * (last - t[0]);
    const auto cube = [](double v) { return v > 0.0 ? v * v * v : 0.0; };

    Eigen::MatrixXd basis(static_cast<Eigen::Index>(values.size()),
                          static_cast<Eigen::Index>(spec.basis_dimension()));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = values[i];
        if (!std::isfinite(x)) throw DataError("rcs_basis: non-finite value at position " + std::to_string(i));
        const auto r = static_cast<Eigen::Index>(i);
        basis(r, 0) = x;
        for (std::size_t j = 0; j + 2 < k; ++j) {
            const double v = cube(x - t[j]) -
                             cube(x - penultimate) * (last - t[j]) / (last - penultimate) +
                             cube(x - last) * (penultimate - t[j]) / (last - penultimate);
            basis(r, static_cast<Eigen::Index>(j + 1)) = v / norm;
        }
    }
    return basis;
}

std::vector<double> default_knot_quantiles(std::size_t k) {
    switch (k) {
        case 3: return {0.10, 0.50, 0.90};
        case 4: return {0.05, 0.35, 0.65, 0.95};
        case 5: return {0.05, 0.275, 0.50, 0.725, 0.95};
        case 6: return {0.05, 0.23, 0.41, 0.59, 0.77, 0.95};
        case 7: return {0.025, 0.1833, 0.3417, 0.50, 0.6583, 0.8167, 0.975};
        default: throw ConfigError("default knot placement supports 3 to 7 knots, got " + std::to_string(k));
    }
}

double sample_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DataError("quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

SplineSpec default_knots(std::span<const double> values, std::size_t k) {
    const auto probs = default_knot_quantiles(k);
    std::vector<double> sorted(values.begin(), values.end());
    for (double v : sorted) {
        if (!std::isfinite(v)) throw DataError("default_knots: non-finite value");
    }
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < k) {
        throw DataError("default_knots: " + std::to_string(k) + " knots need at least " +
                        std::to_string(k) + " distinct values, got " + std::to_string(distinct.size()));
    }

    std::vector<double> knots;
    knots.reserve(k);
    for (double q : probs) {
        double v = sample_quantile(sorted, q);
        if (!knots.empty() && !(v > knots.back())) {
            const auto next = std::upper_bound(distinct.begin(), distinct.end(), knots.back());
            if (next == distinct.end()) {
                throw DataError("default_knots: cannot place " + std::to_string(k) + " distinct knots");
            }
            v = *next;
        }
        knots.push_back(v);
    }
    return SplineSpec(std::move(knots));
}

}  // namespace survbias
