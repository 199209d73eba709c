#include "survbias/survcore/counting_process.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include "survbias/error.hpp"

namespace survbias {

CountingProcessData::CountingProcessData(std::vector<std::string> covariate_names)
    : names_(std::move(covariate_names)) {}

void CountingProcessData::reserve(std::size_t rows) {
    subject_.reserve(rows);
    cluster_.reserve(rows);
    start_.reserve(rows);
    stop_.reserve(rows);
    status_.reserve(rows);
    stratum_.reserve(rows);
    x_.reserve(rows * names_.size());
}

void CountingProcessData::add(std::int64_t subject_id, std::int64_t cluster_id, double start,
                              double stop, int status, std::span<const double> covariates,
                              int stratum) {
    if (covariates.size() != names_.size()) {
        throw DataError("counting-process row " + std::to_string(size() + 1) + " has " +
                        std::to_string(covariates.size()) + " covariates, expected " +
                        std::to_string(names_.size()));
    }
    subject_.push_back(subject_id);
    cluster_.push_back(cluster_id);
    start_.push_back(start);
    stop_.push_back(stop);
    status_.push_back(static_cast<std::uint8_t>(status));
    stratum_.push_back(stratum);
    x_.insert(x_.end(), covariates.begin(), covariates.end());
}

void CountingProcessData::add(const CountingProcessRow& row) {
    add(row.subject_id, row.cluster_id, row.start, row.stop, row.status, row.covariates,
        row.stratum);
}

CountingProcessRow CountingProcessData::row(std::size_t i) const {
    auto x = covariates(i);
    return {subject_[i], cluster_[i], start_[i], stop_[i], status_[i],
            std::vector<double>(x.begin(), x.end()), stratum_[i]};
}

std::size_t CountingProcessData::n_events() const noexcept {
    return static_cast<std::size_t>(std::count(status_.begin(), status_.end(), 1));
}

void CountingProcessData::validate() const {
    const auto fail = [](std::size_t i, const std::string& msg) {
        throw DataError("counting-process row " + std::to_string(i + 1) + ": " + msg);
    };
    for (std::size_t i = 0; i < size(); ++i) {
        if (!std::isfinite(start_[i]) || !std::isfinite(stop_[i])) fail(i, "non-finite time");
        if (!(stop_[i] > start_[i])) fail(i, "stop must exceed start");
        if (status_[i] > 1) fail(i, "status must be 0 or 1");
        for (double v : covariates(i)) {
            if (!std::isfinite(v)) fail(i, "non-finite covariate");
        }
    }

    std::vector<std::size_t> order(size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(stratum_[a], subject_[a], start_[a]) <
               std::tie(stratum_[b], subject_[b], start_[b]);
    });
    for (std::size_t k = 0; k < order.size(); ++k) {
        const std::size_t i = order[k];
        const bool last_of_subject = k + 1 == order.size() ||
                                     subject_[order[k + 1]] != subject_[i] ||
                                     stratum_[order[k + 1]] != stratum_[i];
        if (last_of_subject) continue;
        const std::size_t next = order[k + 1];
        if (start_[next] < stop_[i]) fail(next, "overlaps an earlier interval of the same subject");
        if (status_[i] == 1) fail(i, "event on an interval that is not the subject's last");
    }
}

}  // namespace survbias
