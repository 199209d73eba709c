#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace survbias {

/// One (start, stop] interval of a subject's follow-up.
struct CountingProcessRow {
    std::int64_t subject_id = 0;
    std::int64_t cluster_id = 0;
    double start = 0.0;
    double stop = 0.0;
    int status = 0;
    std::vector<double> covariates;
    int stratum = 0;

    bool operator==(const CountingProcessRow&) const = default;
};

/// Column-major store of counting-process rows; the input to the Cox engine.
///
/// Covariates are stored row-major (`covariate(i, j)` is row i, column j) so
/// that a single row's design vector is contiguous.
class CountingProcessData {
public:
    CountingProcessData() = default;
    explicit CountingProcessData(std::vector<std::string> covariate_names);

    std::size_t size() const noexcept { return start_.size(); }
    bool empty() const noexcept { return start_.empty(); }
    std::size_t n_covariates() const noexcept { return names_.size(); }
    const std::vector<std::string>& covariate_names() const noexcept { return names_; }

    void reserve(std::size_t rows);

    /// Appends a row. `covariates` must have n_covariates() entries.
    void add(std::int64_t subject_id, std::int64_t cluster_id, double start, double stop,
             int status, std::span<const double> covariates, int stratum = 0);
    void add(const CountingProcessRow& row);

    CountingProcessRow row(std::size_t i) const;

    std::span<const std::int64_t> subject_ids() const noexcept { return subject_; }
    std::span<const std::int64_t> cluster_ids() const noexcept { return cluster_; }
    std::span<const double> starts() const noexcept { return start_; }
    std::span<const double> stops() const noexcept { return stop_; }
    std::span<const std::uint8_t> statuses() const noexcept { return status_; }
    std::span<const int> strata() const noexcept { return stratum_; }
    std::span<const double> covariate_values() const noexcept { return x_; }
    std::span<const double> covariates(std::size_t i) const noexcept {
        return {x_.data() + i * names_.size(), names_.size()};
    }
    double covariate(std::size_t i, std::size_t j) const noexcept { return x_[i * names_.size() + j]; }

    std::size_t n_events() const noexcept;

    /// Throws DataError naming the first offending row if any row invariant
    /// fails: stop > start, finite values, status in {0,1}, non-overlapping
    /// intervals per (subject, stratum), and at most one event per
    /// (subject, stratum) located on the subject's last interval.
    void validate() const;

    bool operator==(const CountingProcessData&) const = default;

private:
    std::vector<std::string> names_;
    std::vector<std::int64_t> subject_;
    std::vector<std::int64_t> cluster_;
    std::vector<double> start_;
    std::vector<double> stop_;
    std::vector<std::uint8_t> status_;
    std::vector<int> stratum_;
    std::vector<double> x_;
};

}  // namespace survbias
