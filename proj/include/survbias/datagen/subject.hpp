#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace survbias {

enum class Cohort { Control, Treated, Prospective };

std::string_view to_string(Cohort c) noexcept;
/// Parses "control", "treated" or "prospective"; throws DataError otherwise.
Cohort parse_cohort(std::string_view s);

/// One subject's observed survival data plus, for simulated data, the latent
/// quantities it was generated from.
///
/// Time axes: a Control or Prospective record is measured from diagnosis
/// (entry_time 0). A Treated record is on the reset axis, so event_time runs
/// from treatment start while entry_time = w keeps its position on the
/// diagnosis axis.
struct SubjectRecord {
    std::int64_t id = 0;
    Cohort cohort = Cohort::Control;
    double entry_time = 0.0;
    double event_time = 0.0;
    int event = 0;
    std::optional<double> wait_time;        // w; treated records only
    std::optional<double> treatment_start;  // diagnosis axis; prospective and reset-axis records
    std::vector<double> covariates;         // measured confounders

    // Latent, simulated data only.
    std::optional<double> frailty_rate;           // lambda_i
    std::optional<bool> g_carrier;                // scenario 2
    std::optional<double> latent_untreated_time;  // T[Tx=0] from diagnosis
    std::optional<double> latent_treated_time;    // T[Tx=1] from treatment start

    bool operator==(const SubjectRecord&) const = default;
};

/// A set of records sharing one covariate layout.
struct CohortData {
    std::vector<std::string> covariate_names;
    std::vector<SubjectRecord> records;

    bool operator==(const CohortData&) const = default;
};

}  // namespace survbias
