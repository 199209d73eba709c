#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "survbias/datagen/subject.hpp"
#include "survbias/estimators/result.hpp"
#include "survbias/survcore/counting_process.hpp"

namespace survbias {

enum class Scenario { BetaHeterogeneity, GFactor };

std::string_view to_string(Scenario s) noexcept;
/// Accepts "beta" or "gfactor" (and the enum spellings); throws ConfigError.
Scenario parse_scenario(std::string_view s);

/// Two-cohort simulation settings. Scenario 1 draws a per-time-unit recovery
/// probability p ~ Beta(a, b) and uses the rate -ln(1 - p). Scenario 2 gives a
/// fraction p_g of subjects the rate base_rate * g_multiplier and everyone
/// else base_rate; g_multiplier = 1 removes all heterogeneity.
struct SimulationConfig {
    Scenario scenario = Scenario::BetaHeterogeneity;
    std::size_t n_per_cohort = 10000;
    double wait_rate = 0.1;
    double beta_a = 2.0;
    double beta_b = 10.0;
    double base_rate = 0.2;
    double p_g = 0.3;
    double g_multiplier = 0.15;
    double conditional_hr = 1.0;
    std::optional<double> censoring_horizon;  // maximum follow-up on each record's own clock
    std::uint64_t seed = 1;

    /// Throws ConfigError for any out-of-range field.
    void validate() const;
};

/// Name of the pseudo-random generator behind every stream.
inline constexpr std::string_view kGeneratorName = "mt19937_64";

/// Subjects per generation block. Each block has its own substream seeded from
/// (seed, stream, block index), so output does not depend on worker count.
inline constexpr std::size_t kSubjectsPerBlock = 4096;

/// Treated candidates must survive their wait at no less than this rate.
inline constexpr double kMinAcceptanceRate = 1e-3;

struct FrailtyDraws {
    std::vector<double> rates;
    std::vector<std::uint8_t> g_carrier;  // scenario 2 only, else empty
    std::size_t resamples = 0;            // Beta draws of p = 1 (or 0) that were redrawn
};

/// Individual hazard rates for `n` subjects.
FrailtyDraws draw_frailty(const SimulationConfig& config, std::size_t n, std::mt19937_64& rng);

struct SimulatedCohorts {
    CohortData control;
    CohortData treated;
    std::size_t candidates = 0;  // treated candidates drawn until the last retained one
    double acceptance_rate = 0.0;
    std::size_t frailty_resamples = 0;
};

/// Controls are followed from diagnosis with T ~ Exp(lambda). Treated
/// candidates draw w ~ Exp(wait_rate) and T0 ~ Exp(lambda); those with T0 > w
/// are kept until n_per_cohort are retained, and their treated time is
/// Exp(lambda * conditional_hr) from w. Controls get ids 1..n and treated
/// n+1..2n. Every subject consumes the same draws whatever conditional_hr is,
/// so calibration sees common random numbers.
///
/// Throws ConfigError if the acceptance rate falls below kMinAcceptanceRate.
SimulatedCohorts simulate_cohorts(const SimulationConfig& config);

struct SimulatedProspective {
    CohortData cohort;
    std::size_t frailty_resamples = 0;
};

/// One cohort followed from diagnosis: treatment starts at w if the subject
/// is still event-free then, after which the hazard is lambda * conditional_hr.
SimulatedProspective simulate_prospective(const SimulationConfig& config);

/// Factual rows plus treatment-switched clones with covariate "treated".
/// ATC: controls untreated and cloned as treated, both from diagnosis.
/// ATT: treated subjects treated and cloned as untreated, both entering at w.
/// ATE: the union. A clone shares its subject's cluster id.
CountingProcessData build_counterfactual(const SimulatedCohorts& cohorts, Estimand estimand,
                                         std::optional<double> censoring_horizon = std::nullopt);
CountingProcessData build_counterfactual(const SimulationConfig& config, Estimand estimand);

/// Cox fit of the counterfactual dataset with entry times as left truncation
/// and the arm as sole covariate; robust variance clustered on subject.
EstimatorResult true_marginal_hr(const SimulatedCohorts& cohorts, Estimand estimand,
                                 std::optional<double> censoring_horizon = std::nullopt);
EstimatorResult true_marginal_hr(const SimulationConfig& config, Estimand estimand);

struct CalibrationStep {
    double conditional_hr = 0.0;
    double marginal_hr = 0.0;
};

struct CalibrationResult {
    double conditional_hr = 1.0;
    double marginal_hr = 1.0;
    bool converged = false;
    std::vector<CalibrationStep> trace;
    std::vector<std::string> warnings;
};

struct CalibrationOptions {
    double lower = 1.0;
    double upper = 10.0;
    double tolerance = 0.002;
    int max_iterations = 40;
};

/// Bisection on conditional_hr so the true marginal ATE hazard ratio hits
/// `target`. Every evaluation reuses config.seed. Throws ConfigError when the
/// target is outside the bracket's marginal range; evaluations that break
/// monotonicity beyond the tolerance are reported as warnings.
CalibrationResult calibrate_conditional_hr(const SimulationConfig& config, double target,
                                           const CalibrationOptions& options = {});

}  // namespace survbias
