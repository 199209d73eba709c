#include "survbias/survcore/cox.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "survbias/error.hpp"

namespace survbias {

namespace {

// Column-centred copy of the design. Centring shifts every linear predictor by
// the same constant, so coefficients, likelihood and residuals are unchanged.
std::vector<double> centred_design(const CountingProcessData& data) {
    const std::size_t n = data.size();
    const std::size_t p = data.n_covariates();
    const auto x = data.covariate_values();
    std::vector<double> mean(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) mean[j] += x[i * p + j];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) out[i * p + j] -= mean[j];
    }
    return out;
}

void check_fit_input(const CountingProcessData& data, bool validate) {
    if (data.empty()) throw DataError("Cox model: empty dataset");
    if (data.n_covariates() == 0) throw ConfigError("Cox model: no covariates");
    if (validate) data.validate();
    if (data.n_events() == 0) throw DataError("Cox model: no events in any stratum");
}

}  // namespace

Eigen::VectorXd CoxFit::standard_errors(bool robust) const {
    if (robust) {
        if (!robust_covariance) throw ConfigError("robust covariance was not computed for this fit");
        return robust_covariance->diagonal().cwiseSqrt();
    }
    return model_covariance.diagonal().cwiseSqrt();
}

kernels::PartialLikelihood partial_likelihood(const CountingProcessData& data,
                                              const Eigen::VectorXd& beta, Ties ties,
                                              Execution execution) {
    const auto x = centred_design(data);
    const auto layout = kernels::RiskSetLayout::build(data);
    const auto eta = kernels::linear_predictor(x, data.n_covariates(), beta, execution);
    return kernels::evaluate(layout, x, eta, ties, execution);
}

Eigen::MatrixXd score_residuals(const CountingProcessData& data, const Eigen::VectorXd& beta,
                                Ties ties, Execution execution) {
    const auto x = centred_design(data);
    const auto layout = kernels::RiskSetLayout::build(data);
    const auto eta = kernels::linear_predictor(x, data.n_covariates(), beta, execution);
    return kernels::score_residuals(layout, data, x, eta, ties, execution);
}

CoxFit cox_fit(const CountingProcessData& data, const CoxOptions& options) {
    check_fit_input(data, options.validate_input);
    const std::size_t p = data.n_covariates();
    const auto x = centred_design(data);
    const auto layout = kernels::RiskSetLayout::build(data);

    const auto evaluate = [&](const Eigen::VectorXd& beta) {
        const auto eta = kernels::linear_predictor(x, p, beta, options.execution);
        return kernels::evaluate(layout, x, eta, options.ties, options.execution);
    };

    CoxFit fit;
    fit.names = data.covariate_names();
    fit.n_rows = data.size();
    fit.n_events = data.n_events();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    auto current = evaluate(beta);
    fit.null_log_partial_likelihood = current.loglik;

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        fit.iterations = iter;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(current.information);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
            throw NumericalError("Cox model: information matrix is singular (constant or collinear covariates?)");
        }
        Eigen::VectorXd step = ldlt.solve(current.score);
        Eigen::VectorXd candidate = beta + step;
        auto next = evaluate(candidate);
        for (int halving = 0; halving < 30 && !(next.loglik >= current.loglik - 1e-12 * std::abs(current.loglik)); ++halving) {
            step *= 0.5;
            candidate = beta + step;
            next = evaluate(candidate);
        }
        for (Eigen::Index j = 0; j < candidate.size(); ++j) {
            if (!std::isfinite(candidate[j]) || std::abs(candidate[j]) > options.divergence_bound) {
                throw MonotoneLikelihoodError(
                    "Cox model: monotone likelihood, coefficient '" + fit.names[static_cast<std::size_t>(j)] +
                        "' diverges beyond " + std::to_string(options.divergence_bound),
                    static_cast<int>(j));
            }
        }
        const double change = std::abs(next.loglik - current.loglik) /
                              std::max(std::abs(current.loglik), 1e-300);
        beta = candidate;
        current = std::move(next);
        if (change < options.loglik_tolerance &&
            current.score.cwiseAbs().maxCoeff() < options.score_tolerance) {
            fit.converged = true;
            break;
        }
    }

    fit.coefficients = beta;
    fit.max_abs_score = current.score.cwiseAbs().maxCoeff();
    fit.log_partial_likelihood = current.loglik;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(current.information);
    fit.model_covariance = ldlt.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p),
                                                                static_cast<Eigen::Index>(p)));

    if (options.cluster_variance) {
        const auto eta = kernels::linear_predictor(x, p, beta, options.execution);
        const Eigen::MatrixXd resid =
            kernels::score_residuals(layout, data, x, eta, options.ties, options.execution);
        const Eigen::MatrixXd dfbeta = resid * fit.model_covariance;

        const auto cluster = data.cluster_ids();
        std::vector<std::int64_t> ids(cluster.begin(), cluster.end());
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ids.size()),
                                                     static_cast<Eigen::Index>(p));
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto c = std::lower_bound(ids.begin(), ids.end(), cluster[i]) - ids.begin();
            sums.row(c) += dfbeta.row(static_cast<Eigen::Index>(i));
        }
        fit.robust_covariance = sums.transpose() * sums;
        fit.n_clusters = ids.size();
    }
    return fit;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal quantile: probability must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

HazardRatio hazard_ratio(double log_hr, double se, double level) {
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
    const double z = normal_quantile(0.5 + level / 2.0);
    return {std::exp(log_hr), std::exp(log_hr - z * se), std::exp(log_hr + z * se), se};
}

HazardRatio hazard_ratio(const CoxFit& fit, std::size_t index, double level, bool use_robust) {
    if (!fit.converged) throw NumericalError("hazard ratio requested from a non-converged fit");
    if (index >= static_cast<std::size_t>(fit.coefficients.size())) {
        throw ConfigError("hazard ratio: coefficient index out of range");
    }
    if (use_robust && !fit.robust_covariance) {
        throw ConfigError("hazard ratio: robust covariance requested but not computed");
    }
    const auto se = fit.standard_errors(use_robust)[static_cast<Eigen::Index>(index)];
    return hazard_ratio(fit.coefficients[static_cast<Eigen::Index>(index)], se, level);
}

}  // namespace survbias
