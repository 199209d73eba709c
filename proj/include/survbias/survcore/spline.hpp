#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace survbias {

/// Knots of a restricted cubic spline; k knots give k - 1 basis columns
/// (one linear plus k - 2 nonlinear).
class SplineSpec {
public:
    /// Throws ConfigError unless there are at least 3 strictly increasing finite knots.
    explicit SplineSpec(std::vector<double> knots);

    const std::vector<double>& knots() const noexcept { return knots_; }
    std::size_t basis_dimension() const noexcept { return knots_.size() - 1; }

private:
    std::vector<double> knots_;
};

/// Restricted cubic spline basis in the truncated-power form with the
/// (t_k - t_1)^2 normalisation: column 0 is x itself; column j (1..k-2) is
///
///   (x - t_j)+^3 - (x - t_{k-1})+^3 (t_k - t_j)/(t_k - t_{k-1})
///                + (x - t_k)+^3 (t_{k-1} - t_j)/(t_k - t_{k-1})
///
/// divided by (t_k - t_1)^2, which is linear beyond the boundary knots.
Eigen::MatrixXd rcs_basis(std::span<const double> values, const SplineSpec& spec);

/// Knots at the conventional empirical quantiles for k = 3..7 knots, e.g.
/// (0.10, 0.50, 0.90) for k = 3 and (0.05, 0.275, 0.5, 0.725, 0.95) for k = 5.
/// Coinciding knots are moved up to the next distinct data value.
/// Throws DataError when fewer than k distinct values are available.
SplineSpec default_knots(std::span<const double> values, std::size_t k);

/// Quantile probabilities used by default_knots.
std::vector<double> default_knot_quantiles(std::size_t k);

/// Linear-interpolation sample quantile of sorted data.
double sample_quantile(std::span<const double> sorted, double q);

}  // namespace survbias
