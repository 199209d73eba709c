#pragma once

// Risk-set kernels behind the Cox engine.
//
// Every kernel exists twice: a serial reference that sweeps each stratum
// from the latest event time backwards while adding and removing rows, and
// an OpenMP version that forms the same risk-set sums as differences of two
// chunked prefix scans (rows ordered by stop time minus rows ordered by start
// time). Chunk boundaries are fixed, so the parallel results do not depend on
// the number of threads.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "survbias/kernels/execution.hpp"
#include "survbias/survcore/counting_process.hpp"

namespace survbias {

enum class Ties { Efron, Breslow };

namespace kernels {

/// Event-time structure of one stratum; independent of the coefficients.
struct StratumLayout {
    std::vector<std::uint32_t> by_stop;     // rows, stop time descending
    std::vector<std::uint32_t> by_start;    // rows, start time descending
    std::vector<double> times;              // distinct event times, descending
    std::vector<std::uint32_t> n_stop_ge;   // per event time: #rows with stop >= t
    std::vector<std::uint32_t> n_start_ge;  // per event time: #rows with start >= t
    std::vector<std::uint32_t> death_begin; // CSR offsets into deaths, size times+1
    std::vector<std::uint32_t> deaths;
    bool truncated = false;                 // some row leaves the risk set by its start time

    std::size_t n_groups() const noexcept { return times.size(); }
};

struct RiskSetLayout {
    std::size_t n_rows = 0;
    std::size_t n_covariates = 0;
    std::vector<StratumLayout> strata;

    static RiskSetLayout build(const CountingProcessData& data);
};

/// Log partial likelihood with its gradient and negative Hessian.
struct PartialLikelihood {
    double loglik = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd information;
};

/// `x` is the row-major n x p design, `eta` the linear predictors.
PartialLikelihood evaluate(const RiskSetLayout& layout, std::span<const double> x,
                           std::span<const double> eta, Ties ties, Execution execution);

/// Per-row score residuals (n x p). Row i sums its score contributions over
/// every event time in (start_i, stop_i]; the rows add up to the score.
Eigen::MatrixXd score_residuals(const RiskSetLayout& layout, const CountingProcessData& data,
                                std::span<const double> x, std::span<const double> eta, Ties ties,
                                Execution execution);

/// x * beta for a row-major design.
std::vector<double> linear_predictor(std::span<const double> x, std::size_t p,
                                     const Eigen::VectorXd& beta, Execution execution);

}  // namespace kernels
}  // namespace survbias
