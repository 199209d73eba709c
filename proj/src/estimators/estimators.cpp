#include "survbias/estimators/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "survbias/error.hpp"
#include "survbias/survcore/cox.hpp"
#include "survbias/survcore/spline.hpp"

namespace survbias {

namespace {

std::string record_label(const SubjectRecord& r) {
    return std::string(to_string(r.cohort)) + " record id " + std::to_string(r.id);
}

// Builds a Cox design: leading columns supplied per row, then the confounders.
class Design {
public:
    Design(const CohortData& src, std::vector<std::string> leading, const std::vector<std::string>& confounders)
        : n_leading_(leading.size()) {
        for (const auto& name : confounders) {
            const auto it = std::find(src.covariate_names.begin(), src.covariate_names.end(), name);
            if (it == src.covariate_names.end()) throw DataError("confounder column '" + name + "' not found");
            index_.push_back(static_cast<std::size_t>(it - src.covariate_names.begin()));
            leading.push_back(name);
        }
        data_ = CountingProcessData(std::move(leading));
        row_.resize(data_.n_covariates());
    }

    void add(const SubjectRecord& r, double start, double stop, int status, std::initializer_list<double> lead,
             int stratum = 0, std::optional<std::int64_t> subject = std::nullopt) {
        add(r, start, stop, status, std::span<const double>(lead.begin(), lead.size()), stratum, subject);
    }

    void add(const SubjectRecord& r, double start, double stop, int status, std::span<const double> lead,
             int stratum = 0, std::optional<std::int64_t> subject = std::nullopt) {
        std::copy(lead.begin(), lead.end(), row_.begin());
        for (std::size_t j = 0; j < index_.size(); ++j) {
            if (index_[j] >= r.covariates.size()) throw DataError(record_label(r) + " lacks confounder values");
            row_[n_leading_ + j] = r.covariates[index_[j]];
        }
        // Distinct subject keys per row unless a subject spans several
        // intervals; persons are tied together through the cluster id.
        data_.add(subject.value_or(static_cast<std::int64_t>(data_.size())), r.id, start, stop, status, row_,
                  stratum);
    }

    CountingProcessData& data() { return data_; }

private:
    std::size_t n_leading_;
    std::vector<std::size_t> index_;
    std::vector<double> row_;
    CountingProcessData data_;
};

std::size_t count_clusters(const CountingProcessData& data) {
    const auto c = data.cluster_ids();
    std::vector<std::int64_t> ids(c.begin(), c.end());
    std::sort(ids.begin(), ids.end());
    return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

EstimatorResult fit_treatment(Method method, const CountingProcessData& data, const EstimationSettings& s) {
    CoxOptions options;
    options.ties = s.ties;
    options.execution = s.execution;
    options.cluster_variance = s.robust_variance;
    const auto fit = cox_fit(data, options);
    if (!fit.converged) {
        throw NumericalError(std::string(to_string(method)) + ": Cox fit did not converge in " +
                             std::to_string(fit.iterations) + " iterations (max |score| " +
                             std::to_string(fit.max_abs_score) + ")");
    }
    const auto hr = hazard_ratio(fit, 0, s.level, s.robust_variance);
    EstimatorResult r;
    r.method = method;
    r.estimand = *estimand_of(method);
    r.hr = hr.hr;
    r.ci_low = hr.ci_low;
    r.ci_high = hr.ci_high;
    r.se_log_hr = hr.se_log_hr;
    r.n_subjects = count_clusters(data);
    r.n_events = fit.n_events;
    r.robust_se_used = s.robust_variance;
    return r;
}

struct Split {
    std::vector<const SubjectRecord*> control;
    std::vector<const SubjectRecord*> treated;
};

// Two-cohort view of reset-axis data; both arms must be present.
Split split_cohorts(const CohortData& data, std::string_view what) {
    Split s;
    for (const auto& r : data.records) {
        switch (r.cohort) {
            case Cohort::Control: s.control.push_back(&r); break;
            case Cohort::Treated: s.treated.push_back(&r); break;
            case Cohort::Prospective:
                throw DataError(std::string(what) + ": " + record_label(r) +
                                " is prospective; restructure with reset_time_axis first");
        }
    }
    if (s.control.empty()) throw DataError(std::string(what) + ": no control records");
    if (s.treated.empty()) throw DataError(std::string(what) + ": no treated records");
    return s;
}

double wait_of(const SubjectRecord& r, std::string_view what) {
    if (!r.wait_time) throw DataError(std::string(what) + ": " + record_label(r) + " has no wait_time");
    return *r.wait_time;
}

}  // namespace

void LandmarkSpec::validate() const {
    if (times.empty()) throw ConfigError("landmark times must not be empty");
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!std::isfinite(times[k]) || times[k] < 0.0) throw ConfigError("landmark times must be non-negative");
        if (k > 0 && !(times[k] > times[k - 1])) throw ConfigError("landmark times must be strictly increasing");
    }
    if (!(std::isfinite(window) && window > 0.0)) throw ConfigError("landmark window must be positive");
}

LandmarkSpec LandmarkSpec::simulation() {
    LandmarkSpec s;
    for (int t = 0; t <= 20; ++t) s.times.push_back(t);
    s.window = 1.0;
    return s;
}

LandmarkSpec LandmarkSpec::application() {
    LandmarkSpec s;
    for (int t = 0; t <= 16; t += 2) s.times.push_back(t);
    s.window = 2.0;
    return s;
}

LandmarkSpec LandmarkSpec::preset(std::string_view name) {
    if (name == "simulation") return simulation();
    if (name == "application") return application();
    throw ConfigError("unknown landmark preset '" + std::string(name) + "' (expected simulation or application)");
}

void EstimationSettings::validate() const {
    landmarks.validate();
    if (rcs_knots < 3 || rcs_knots > 7) throw ConfigError("rcs_knots must be between 3 and 7");
    if (!(early_w_max > 0.0)) throw ConfigError("early_w_max must be positive");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
}

CohortData reset_time_axis(const CohortData& prospective) {
    CohortData out;
    out.covariate_names = prospective.covariate_names;
    out.records.reserve(prospective.records.size() * 2);
    std::vector<SubjectRecord> treated;
    for (const auto& p : prospective.records) {
        if (p.cohort != Cohort::Prospective) {
            throw DataError("reset_time_axis: " + record_label(p) + " is not from a prospective cohort");
        }
        SubjectRecord c;
        c.id = p.id;
        c.cohort = Cohort::Control;
        c.covariates = p.covariates;
        if (!p.treatment_start) {
            c.event_time = p.event_time;
            c.event = p.event;
            out.records.push_back(std::move(c));
            continue;
        }
        const double w = *p.treatment_start;
        if (!(w > 0.0 && w < p.event_time)) {
            throw DataError("reset_time_axis: " + record_label(p) + " starts treatment at " + std::to_string(w) +
                            ", not inside (0, event_time)");
        }
        c.event_time = w;
        c.event = 0;
        c.treatment_start = w;
        out.records.push_back(std::move(c));

        SubjectRecord t;
        t.id = p.id;
        t.cohort = Cohort::Treated;
        t.entry_time = w;
        t.event_time = p.event_time - w;
        t.event = p.event;
        t.wait_time = w;
        t.treatment_start = w;
        t.covariates = p.covariates;
        treated.push_back(std::move(t));
    }
    for (auto& t : treated) out.records.push_back(std::move(t));
    return out;
}

EstimatorResult estimate_unadjusted(const CohortData& data, const EstimationSettings& settings) {
    const auto s = split_cohorts(data, "unadjusted");
    Design d(data, {"treated"}, settings.confounders);
    for (const auto* r : s.control) d.add(*r, 0.0, r->event_time, r->event, {0.0});
    for (const auto* r : s.treated) d.add(*r, 0.0, r->event_time, r->event, {1.0});
    return fit_treatment(Method::Unadjusted, d.data(), settings);
}

EstimatorResult estimate_wait_covariate(const CohortData& data, WaitForm form, const EstimationSettings& settings) {
    const char* what = form == WaitForm::Linear ? "wait_linear" : form == WaitForm::Quadratic ? "wait_quadratic"
                                                                                             : "wait_rcs";
    const auto s = split_cohorts(data, what);
    std::vector<double> w_treated;
    w_treated.reserve(s.treated.size());
    for (const auto* r : s.treated) w_treated.push_back(wait_of(*r, what));

    std::optional<SplineSpec> spline;
    std::vector<std::string> names{"treated"};
    Method method = Method::WaitLinear;
    switch (form) {
        case WaitForm::Linear:
            names.push_back("wait");
            break;
        case WaitForm::Quadratic:
            method = Method::WaitQuadratic;
            names.insert(names.end(), {"wait", "wait_sq"});
            break;
        case WaitForm::Rcs:
            method = Method::WaitRcs;
            spline = default_knots(w_treated, settings.rcs_knots);
            for (std::size_t j = 0; j < spline->basis_dimension(); ++j) names.push_back("wait_rcs" + std::to_string(j + 1));
            break;
    }
    const std::size_t q = names.size() - 1;

    const auto basis = [&](double w, double* out) {
        if (form == WaitForm::Linear) {
            out[0] = w;
        } else if (form == WaitForm::Quadratic) {
            out[0] = w;
            out[1] = w * w;
        } else {
            const auto b = rcs_basis(std::span<const double>(&w, 1), *spline);
            for (std::size_t j = 0; j < q; ++j) out[j] = b(0, static_cast<Eigen::Index>(j));
        }
    };

    Design d(data, names, settings.confounders);
    std::vector<double> lead(q + 1, 0.0);
    for (const auto* r : s.control) {
        std::fill(lead.begin(), lead.end(), 0.0);
        if (settings.wait_coding == WaitCoding::Shared) basis(r->treatment_start.value_or(0.0), lead.data() + 1);
        d.add(*r, 0.0, r->event_time, r->event, lead);
    }
    for (std::size_t i = 0; i < s.treated.size(); ++i) {
        lead[0] = 1.0;
        basis(w_treated[i], lead.data() + 1);
        d.add(*s.treated[i], 0.0, s.treated[i]->event_time, s.treated[i]->event, lead);
    }
    return fit_treatment(method, d.data(), settings);
}

LandmarkData build_landmarks(const CohortData& data, const LandmarkSpec& spec,
                             const std::vector<std::string>& confounders) {
    spec.validate();
    const auto s = split_cohorts(data, "matching");
    LandmarkData out;
    Design d(data, {"treated"}, confounders);

    std::vector<std::uint8_t> matched(s.treated.size(), 0);
    for (std::size_t k = 0; k < spec.times.size(); ++k) {
        const double L = spec.times[k];
        std::size_t n_treated = 0;
        std::size_t n_control = 0;
        for (const auto* r : s.treated) {
            const double w = wait_of(*r, "matching");
            n_treated += w >= L && w < L + spec.window;
        }
        for (const auto* r : s.control) n_control += r->event_time > L;
        if (n_treated == 0 || n_control == 0) {
            out.warnings.push_back("landmark " + std::to_string(L) + " dropped: " + std::to_string(n_treated) +
                                   " treated, " + std::to_string(n_control) + " controls");
            continue;
        }
        const int stratum = static_cast<int>(k);
        for (std::size_t i = 0; i < s.treated.size(); ++i) {
            const auto* r = s.treated[i];
            const double w = *r->wait_time;
            if (w >= L && w < L + spec.window) {
                d.add(*r, 0.0, r->event_time, r->event, {1.0}, stratum);
                matched[i] = 1;
            }
        }
        for (const auto* r : s.control) {
            if (r->event_time > L) d.add(*r, 0.0, r->event_time - L, r->event, {0.0}, stratum);
        }
        out.used.push_back(k);
    }
    out.treated_unmatched = static_cast<std::size_t>(std::count(matched.begin(), matched.end(), 0));
    if (out.treated_unmatched > 0) {
        out.warnings.push_back(std::to_string(out.treated_unmatched) +
                               " treated subjects fall in no landmark window and were excluded");
    }
    if (out.used.empty()) throw DataError("matching: every landmark lacks treated or control subjects");
    out.data = std::move(d.data());
    return out;
}

EstimatorResult estimate_matching(const CohortData& data, const EstimationSettings& settings) {
    auto lm = build_landmarks(data, settings.landmarks, settings.confounders);
    auto r = fit_treatment(Method::Matching, lm.data, settings);
    r.warnings = std::move(lm.warnings);
    return r;
}

EstimatorResult estimate_early_treated(const CohortData& data, const EstimationSettings& settings) {
    const auto s = split_cohorts(data, "early_treated");
    Design d(data, {"treated"}, settings.confounders);
    for (const auto* r : s.control) d.add(*r, 0.0, r->event_time, r->event, {0.0});
    std::size_t kept = 0;
    for (const auto* r : s.treated) {
        if (wait_of(*r, "early_treated") <= settings.early_w_max) {
            d.add(*r, 0.0, r->event_time, r->event, {1.0});
            ++kept;
        }
    }
    if (kept == 0) {
        throw DataError("early_treated: no treated subject with w <= " + std::to_string(settings.early_w_max) +
                        " (non-positivity)");
    }
    return fit_treatment(Method::EarlyTreated, d.data(), settings);
}

EstimatorResult estimate_median_control(const CohortData& data, const EstimationSettings& settings) {
    const auto s = split_cohorts(data, "median_control");
    std::vector<double> w;
    for (const auto* r : s.treated) w.push_back(wait_of(*r, "median_control"));
    std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>((w.size() - 1) / 2), w.end());
    const double m = w[(w.size() - 1) / 2];

    Design d(data, {"treated"}, settings.confounders);
    std::size_t kept = 0;
    for (const auto* r : s.control) {
        if (r->event_time > m) {
            d.add(*r, 0.0, r->event_time - m, r->event, {0.0});
            ++kept;
        }
    }
    if (kept == 0) throw DataError("median_control: no control survives past the median wait " + std::to_string(m));
    for (const auto* r : s.treated) d.add(*r, 0.0, r->event_time, r->event, {1.0});
    auto out = fit_treatment(Method::MedianControl, d.data(), settings);
    out.warnings.push_back("median treated wait " + std::to_string(m));
    return out;
}

EstimatorResult estimate_left_truncation(const CohortData& data, const EstimationSettings& settings) {
    const auto s = split_cohorts(data, "left_truncation");
    Design d(data, {"treated"}, settings.confounders);
    for (const auto* r : s.control) d.add(*r, r->entry_time, r->entry_time + r->event_time, r->event, {0.0});
    for (const auto* r : s.treated) d.add(*r, r->entry_time, r->entry_time + r->event_time, r->event, {1.0});
    return fit_treatment(Method::LeftTruncation, d.data(), settings);
}

EstimatorResult estimate_time_varying(const CohortData& prospective, const EstimationSettings& settings) {
    Design d(prospective, {"treated"}, settings.confounders);
    for (const auto& r : prospective.records) {
        if (r.cohort != Cohort::Prospective) {
            throw DataError("time_varying: " + record_label(r) + " is not from a prospective cohort");
        }
        if (!r.treatment_start) {
            d.add(r, 0.0, r.event_time, r.event, {0.0}, 0, r.id);
            continue;
        }
        const double w = *r.treatment_start;
        if (!(w > 0.0 && w < r.event_time)) {
            throw DataError("time_varying: " + record_label(r) + " starts treatment outside (0, event_time)");
        }
        d.add(r, 0.0, w, 0, {0.0}, 0, r.id);
        d.add(r, w, r.event_time, r.event, {1.0}, 0, r.id);
    }
    if (d.data().empty()) throw DataError("time_varying: no records");
    return fit_treatment(Method::TimeVarying, d.data(), settings);
}

const ResultRow* ResultTable::find(Method m, std::optional<Estimand> e) const {
    for (const auto& r : rows) {
        if (r.method == m && (!e || r.estimand == *e)) return &r;
    }
    return nullptr;
}

std::optional<double> TruthValues::get(Estimand e) const {
    switch (e) {
        case Estimand::ATC: return atc;
        case Estimand::ATT: return att;
        case Estimand::ATE: return ate;
    }
    return std::nullopt;
}

void attach_bias(ResultTable& table, const TruthValues& fallback) {
    const auto hr_of = [&](Method m, std::optional<Estimand> e) -> std::optional<double> {
        const auto* row = table.find(m, e);
        if (row == nullptr || !row->result) return std::nullopt;
        return row->result->hr;
    };
    const auto truth_for = [&](Estimand e) -> std::optional<double> {
        if (auto t = hr_of(Method::Truth, e)) return t;
        if (auto t = fallback.get(e)) return t;
        if (e == Estimand::ATE) return hr_of(Method::TimeVarying, std::nullopt);
        return std::nullopt;
    };
    const auto unadjusted = hr_of(Method::Unadjusted, std::nullopt);
    for (auto& row : table.rows) {
        row.bias.reset();
        if (row.method == Method::Truth || !row.result || !unadjusted) continue;
        const auto truth = truth_for(row.estimand);
        if (!truth) continue;
        row.bias = bias_metrics(*truth, *unadjusted, row.result->hr);
    }
}

namespace {

template <class F>
void run_row(ResultTable& table, Method method, F&& f) {
    ResultRow row;
    row.method = method;
    row.estimand = estimand_of(method).value_or(Estimand::ATE);
    try {
        row.result = f();
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    table.rows.push_back(std::move(row));
}

void run_estimators(ResultTable& table, const CohortData& reset, const EstimationSettings& s) {
    run_row(table, Method::Unadjusted, [&] { return estimate_unadjusted(reset, s); });
    run_row(table, Method::WaitLinear, [&] { return estimate_wait_covariate(reset, WaitForm::Linear, s); });
    run_row(table, Method::WaitQuadratic, [&] { return estimate_wait_covariate(reset, WaitForm::Quadratic, s); });
    run_row(table, Method::WaitRcs, [&] { return estimate_wait_covariate(reset, WaitForm::Rcs, s); });
    run_row(table, Method::Matching, [&] { return estimate_matching(reset, s); });
    run_row(table, Method::EarlyTreated, [&] { return estimate_early_treated(reset, s); });
    run_row(table, Method::MedianControl, [&] { return estimate_median_control(reset, s); });
    run_row(table, Method::LeftTruncation, [&] { return estimate_left_truncation(reset, s); });
}

}  // namespace

ResultTable run_all(const CohortData& data, const EstimationSettings& settings, const TruthValues& truth) {
    settings.validate();
    ResultTable table;
    const bool prospective = !data.records.empty() &&
                             std::all_of(data.records.begin(), data.records.end(),
                                         [](const auto& r) { return r.cohort == Cohort::Prospective; });
    if (prospective) {
        const auto reset = reset_time_axis(data);
        run_estimators(table, reset, settings);
        run_row(table, Method::TimeVarying, [&] { return estimate_time_varying(data, settings); });
    } else {
        run_estimators(table, data, settings);
    }
    for (const auto& row : table.rows) {
        if (!row.result) continue;
        for (const auto& w : row.result->warnings) table.warnings.push_back(std::string(to_string(row.method)) + ": " + w);
    }
    attach_bias(table, truth);
    return table;
}

ResultTable run_all(const SimulationConfig& config, const EstimationSettings& settings) {
    settings.validate();
    const auto cohorts = simulate_cohorts(config);
    CohortData both;
    both.records = cohorts.control.records;
    both.records.insert(both.records.end(), cohorts.treated.records.begin(), cohorts.treated.records.end());

    ResultTable table;
    for (Estimand e : {Estimand::ATC, Estimand::ATT, Estimand::ATE}) {
        ResultRow row;
        row.method = Method::Truth;
        row.estimand = e;
        try {
            row.result = true_marginal_hr(cohorts, e, config.censoring_horizon);
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
        table.rows.push_back(std::move(row));
    }
    auto rest = run_all(both, settings);
    for (auto& r : rest.rows) table.rows.push_back(std::move(r));
    table.warnings = std::move(rest.warnings);
    attach_bias(table);
    return table;
}

}  // namespace survbias
