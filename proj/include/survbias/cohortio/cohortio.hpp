#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "json.hpp"

#include "survbias/datagen/subject.hpp"
#include "survbias/estimators/estimators.hpp"
#include "survbias/survcore/counting_process.hpp"

namespace survbias::cohortio {

// Cohort files: comma-separated, header first, one subject record per line.
//
//   id,cohort,entry_time,event_time,event,wait_time,treatment_start[,x_<name>...]
//      [,frailty_rate,g_carrier,latent_untreated_time,latent_treated_time]
//
// wait_time and treatment_start may be empty. Covariate columns carry the
// prefix; the latent columns are written only on request. Reals are written
// with 17 significant digits so a read returns the exact same doubles.

inline constexpr std::string_view kCovariatePrefix = "x_";

struct WriteOptions {
    bool latent = false;
};

struct ReadOptions {
    bool latent = false;  // keep latent columns instead of ignoring them
};

void write_cohort(const CohortData& data, std::ostream& out, const WriteOptions& options = {});
void write_cohort(const CohortData& data, const std::filesystem::path& path, const WriteOptions& options = {});

/// Strict reader: throws DataError naming the line and column of the first
/// missing column, malformed value or duplicate (id, cohort) pair.
CohortData read_cohort(std::istream& in, const ReadOptions& options = {}, std::string_view source = "<input>");
CohortData read_cohort(const std::filesystem::path& path, const ReadOptions& options = {});

// Counting-process files:
//   subject_id,cluster_id,start,stop,status,stratum[,<covariate>...]
void write_counting_process(const CountingProcessData& data, std::ostream& out);
void write_counting_process(const CountingProcessData& data, const std::filesystem::path& path);
CountingProcessData read_counting_process(std::istream& in, std::string_view source = "<input>");
CountingProcessData read_counting_process(const std::filesystem::path& path);

enum class ResultFormat { Csv, Text };

/// Parses "csv" or "text"; throws ConfigError.
ResultFormat parse_result_format(std::string_view s);

/// "1.55 (1.55-1.56)": hazard ratio and interval to two decimals.
std::string format_hr(double hr, double ci_low, double ci_high);

// Result files: one row per estimator (and truth) with bias columns.
//   method,estimand,hr,ci_low,ci_high,se_log_hr,n_subjects,n_events,robust_se,
//   pct_bias_unadjusted,pct_bias_eliminated,error
// The text format is an aligned table for reading.
void write_results(const ResultTable& table, std::ostream& out, ResultFormat format);
void write_results(const ResultTable& table, const std::filesystem::path& path, ResultFormat format);
ResultTable read_results(std::istream& in, std::string_view source = "<input>");
ResultTable read_results(const std::filesystem::path& path);

/// Writes `meta` as indented JSON to `<path>.meta.json`.
std::filesystem::path write_metadata(const std::filesystem::path& output, const nlohmann::json& meta);
std::filesystem::path metadata_path(const std::filesystem::path& output);

/// `v` with 17 significant digits, enough to read back the same double.
std::string format_real(double v);

}  // namespace survbias::cohortio
