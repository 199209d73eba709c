#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "survbias/kernels/cox_kernels.hpp"
#include "survbias/kernels/execution.hpp"
#include "survbias/survcore/counting_process.hpp"

namespace survbias {

struct CoxOptions {
    Ties ties = Ties::Efron;
    int max_iterations = 50;
    double loglik_tolerance = 1e-9;  // relative change between iterations
    double score_tolerance = 1e-6;   // max |score| at the accepted estimate
    double divergence_bound = 15.0;  // |beta_j| beyond this is a monotone likelihood
    bool cluster_variance = false;   // robust covariance clustered on cluster_id
    bool validate_input = true;
    Execution execution = Execution::Parallel;
};

struct CoxFit {
    std::vector<std::string> names;
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd model_covariance;
    std::optional<Eigen::MatrixXd> robust_covariance;
    double log_partial_likelihood = 0.0;
    double null_log_partial_likelihood = 0.0;
    std::size_t n_rows = 0;
    std::size_t n_events = 0;
    std::size_t n_clusters = 0;
    int iterations = 0;
    bool converged = false;
    double max_abs_score = 0.0;

    /// Standard errors from the robust covariance when requested, else model-based.
    Eigen::VectorXd standard_errors(bool robust) const;
};

/// Maximizes the stratified partial likelihood of a counting-process dataset.
///
/// The risk set at an event time t of stratum s holds every row of s with
/// start < t <= stop, so delayed entry and time-varying covariates are both
/// expressed through (start, stop] intervals. Newton steps are halved until
/// the log likelihood does not decrease.
///
/// Throws DataError for empty input or a dataset without events,
/// MonotoneLikelihoodError if a coefficient passes `divergence_bound`, and
/// NumericalError for a singular information matrix. Running out of
/// iterations is not an error: the fit comes back with `converged == false`.
CoxFit cox_fit(const CountingProcessData& data, const CoxOptions& options = {});

/// Log partial likelihood, score and information at `beta` (no fitting).
kernels::PartialLikelihood partial_likelihood(const CountingProcessData& data,
                                              const Eigen::VectorXd& beta, Ties ties = Ties::Efron,
                                              Execution execution = Execution::Serial);

/// Per-row score residuals at `beta` (rows x covariates).
Eigen::MatrixXd score_residuals(const CountingProcessData& data, const Eigen::VectorXd& beta,
                                Ties ties = Ties::Efron, Execution execution = Execution::Serial);

struct HazardRatio {
    double hr = 1.0;
    double ci_low = 1.0;
    double ci_high = 1.0;
    double se_log_hr = 0.0;
};

/// Standard normal quantile.
double normal_quantile(double p);

/// Wald hazard ratio and confidence interval for one coefficient.
HazardRatio hazard_ratio(double log_hr, double se, double level = 0.95);
HazardRatio hazard_ratio(const CoxFit& fit, std::size_t index, double level = 0.95,
                         bool use_robust = false);

}  // namespace survbias
