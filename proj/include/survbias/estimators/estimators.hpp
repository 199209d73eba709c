#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "survbias/datagen/simulation.hpp"
#include "survbias/datagen/subject.hpp"
#include "survbias/estimators/result.hpp"
#include "survbias/kernels/cox_kernels.hpp"
#include "survbias/kernels/execution.hpp"
#include "survbias/survcore/bias.hpp"
#include "survbias/survcore/counting_process.hpp"

namespace survbias {

/// Landmark times L_k; treated subjects enter landmark k when w is in [L_k, L_k + window).
struct LandmarkSpec {
    std::vector<double> times;
    double window = 1.0;

    /// Throws ConfigError unless times are non-negative, strictly increasing
    /// and non-empty, and window > 0.
    void validate() const;

    /// {0, 1, ..., 20} with window 1.
    static LandmarkSpec simulation();
    /// {0, 2, ..., 16} with window 2.
    static LandmarkSpec application();
    /// "simulation" or "application".
    static LandmarkSpec preset(std::string_view name);
};

enum class WaitForm { Linear, Quadratic, Rcs };

/// How control rows enter the wait-time columns. TreatedOnly sets them to
/// zero, which is an implicit treatment interaction. Shared evaluates f() at
/// the control record's own later treatment start when there is one (reset
/// axis data from a prospective cohort) and at 0 otherwise.
enum class WaitCoding { TreatedOnly, Shared };

struct EstimationSettings {
    LandmarkSpec landmarks = LandmarkSpec::simulation();
    std::size_t rcs_knots = 5;
    double early_w_max = 1.0;  // treated with w <= early_w_max count as early
    double level = 0.95;
    bool robust_variance = true;  // sandwich clustered on subject id
    std::vector<std::string> confounders;
    WaitCoding wait_coding = WaitCoding::TreatedOnly;
    Ties ties = Ties::Efron;
    Execution execution = Execution::Parallel;

    void validate() const;
};

/// Splits prospective records into a control-axis record (follow-up from
/// diagnosis until event, censoring or treatment start) and, for treated
/// subjects, a treated record timed from treatment start with entry_time = w.
/// Both records keep the subject id, which is the cluster for robust variance.
/// Throws DataError when a treatment start is not before the event time.
CohortData reset_time_axis(const CohortData& prospective);

/// Reset-axis Cox model with a treatment indicator (and confounders).
EstimatorResult estimate_unadjusted(const CohortData& data, const EstimationSettings& settings = {});

/// Adds f(w) columns for the treated; the result is the treatment coefficient.
EstimatorResult estimate_wait_covariate(const CohortData& data, WaitForm form,
                                        const EstimationSettings& settings = {});

struct LandmarkData {
    CountingProcessData data;          // stratum = landmark index
    std::vector<std::size_t> used;     // landmark indices kept
    std::size_t treated_unmatched = 0; // treated whose w falls in no kept window
    std::vector<std::string> warnings;
};

/// Landmark k holds treated with w in [L_k, L_k + window), timed from
/// treatment start, and controls still event-free at L_k, timed from L_k.
/// Landmarks lacking either arm are dropped with a warning.
LandmarkData build_landmarks(const CohortData& data, const LandmarkSpec& spec,
                             const std::vector<std::string>& confounders = {});

/// Landmark-stratified Cox model, robust variance clustered on subject.
EstimatorResult estimate_matching(const CohortData& data, const EstimationSettings& settings = {});

/// Treated with w <= settings.early_w_max against all controls (ATC).
EstimatorResult estimate_early_treated(const CohortData& data, const EstimationSettings& settings = {});

/// Treated against controls event-free past the lower median treated w,
/// with controls timed from that median (ATT).
EstimatorResult estimate_median_control(const CohortData& data, const EstimationSettings& settings = {});

/// Original time axis: controls (0, T], treated (w, w + T_reset].
EstimatorResult estimate_left_truncation(const CohortData& data, const EstimationSettings& settings = {});

/// Prospective cohort with treatment as a time-varying covariate.
EstimatorResult estimate_time_varying(const CohortData& prospective,
                                      const EstimationSettings& settings = {});

struct ResultRow {
    Method method = Method::Unadjusted;
    Estimand estimand = Estimand::ATE;
    std::optional<EstimatorResult> result;
    std::string error;  // set when the estimator failed
    std::optional<BiasReport> bias;
};

struct ResultTable {
    std::vector<ResultRow> rows;
    std::vector<std::string> warnings;

    const ResultRow* find(Method m, std::optional<Estimand> e = std::nullopt) const;
};

/// Known true hazard ratios per estimand.
struct TruthValues {
    std::optional<double> atc;
    std::optional<double> att;
    std::optional<double> ate;

    std::optional<double> get(Estimand e) const;
};

/// Runs every applicable estimator. Prospective input is restructured with
/// reset_time_axis and also gets the time-varying estimate, which then serves
/// as the ATE reference when no truth is supplied. Failures are recorded in
/// the row instead of thrown.
ResultTable run_all(const CohortData& data, const EstimationSettings& settings,
                    const TruthValues& truth = {});

/// Simulates the cohorts, adds the three counterfactual truth rows and runs
/// every estimator against them.
ResultTable run_all(const SimulationConfig& config, const EstimationSettings& settings);

/// Fills the bias column of every row from the truth rows (or `fallback`) and
/// the unadjusted row.
void attach_bias(ResultTable& table, const TruthValues& fallback = {});

}  // namespace survbias
