#include "survbias/datagen/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/random/beta_distribution.hpp>

#include "survbias/error.hpp"
#include "survbias/kernels/execution.hpp"
#include "survbias/survcore/cox.hpp"

namespace survbias {

namespace {

enum Stream : std::uint32_t { kControlStream = 1, kTreatedStream = 2, kProspectiveStream = 3 };

std::mt19937_64 block_rng(std::uint64_t seed, Stream stream, std::size_t block) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(block),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(block) >> 32)};
    return std::mt19937_64(seq);
}

struct Frailty {
    double rate;
    std::optional<bool> g;
};

Frailty draw_one(const SimulationConfig& c, std::mt19937_64& rng, std::size_t& resamples) {
    if (c.scenario == Scenario::GFactor) {
        const bool g = std::bernoulli_distribution(c.p_g)(rng);
        return {g ? c.base_rate * c.g_multiplier : c.base_rate, g};
    }
    boost::random::beta_distribution<double> beta(c.beta_a, c.beta_b);
    // p = 1 has an infinite rate and p = 0 a zero rate; both are redrawn.
    for (;;) {
        const double p = beta(rng);
        if (p > 0.0 && p < 1.0) return {-std::log1p(-p), std::nullopt};
        ++resamples;
    }
}

double exp1(std::mt19937_64& rng) { return std::exponential_distribution<double>(1.0)(rng); }

// Observed time and status under follow-up capped at `horizon`.
std::pair<double, int> censor(double t, const std::optional<double>& horizon) {
    if (horizon && t > *horizon) return {*horizon, 0};
    return {t, 1};
}

SubjectRecord control_record(const SimulationConfig& c, std::mt19937_64& rng, std::int64_t id,
                             std::size_t& resamples) {
    const auto f = draw_one(c, rng, resamples);
    const double t0 = exp1(rng) / f.rate;
    const double t1 = exp1(rng) / (f.rate * c.conditional_hr);
    SubjectRecord r;
    r.id = id;
    r.cohort = Cohort::Control;
    std::tie(r.event_time, r.event) = censor(t0, c.censoring_horizon);
    r.frailty_rate = f.rate;
    r.g_carrier = f.g;
    r.latent_untreated_time = t0;
    r.latent_treated_time = t1;
    return r;
}

struct Candidate {
    SubjectRecord record;
    bool selected;
};

Candidate treated_candidate(const SimulationConfig& c, std::mt19937_64& rng, std::size_t& resamples) {
    const auto f = draw_one(c, rng, resamples);
    const double w = std::exponential_distribution<double>(c.wait_rate)(rng);
    const double t0 = exp1(rng) / f.rate;
    const double t1 = exp1(rng) / (f.rate * c.conditional_hr);
    Candidate out{{}, t0 > w};
    if (!out.selected) return out;
    auto& r = out.record;
    r.cohort = Cohort::Treated;
    r.entry_time = w;
    std::tie(r.event_time, r.event) = censor(t1, c.censoring_horizon);
    r.wait_time = w;
    r.treatment_start = w;
    r.frailty_rate = f.rate;
    r.g_carrier = f.g;
    r.latent_untreated_time = t0;
    r.latent_treated_time = t1;
    return out;
}

SubjectRecord prospective_record(const SimulationConfig& c, std::mt19937_64& rng, std::int64_t id,
                                 std::size_t& resamples) {
    const auto f = draw_one(c, rng, resamples);
    const double w = std::exponential_distribution<double>(c.wait_rate)(rng);
    const double t0 = exp1(rng) / f.rate;
    const double t1 = exp1(rng) / (f.rate * c.conditional_hr);
    SubjectRecord r;
    r.id = id;
    r.cohort = Cohort::Prospective;
    r.frailty_rate = f.rate;
    r.g_carrier = f.g;
    r.latent_untreated_time = t0;
    const bool treated = t0 > w && !(c.censoring_horizon && w >= *c.censoring_horizon);
    if (treated) {
        r.wait_time = w;
        r.treatment_start = w;
        r.latent_treated_time = t1;
        std::tie(r.event_time, r.event) = censor(w + t1, c.censoring_horizon);
    } else {
        std::tie(r.event_time, r.event) = censor(t0, c.censoring_horizon);
    }
    return r;
}

std::size_t n_blocks(std::size_t n) { return (n + kSubjectsPerBlock - 1) / kSubjectsPerBlock; }

// Fills n records block by block; block b always uses substream (seed, stream, b).
template <class Make>
std::vector<SubjectRecord> generate_fixed(const SimulationConfig& c, Stream stream, Make make,
                                          std::size_t& resamples) {
    const std::size_t n = c.n_per_cohort;
    std::vector<SubjectRecord> out(n);
    const std::size_t blocks = n_blocks(n);
    std::vector<std::size_t> block_resamples(blocks, 0);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
        auto rng = block_rng(c.seed, stream, static_cast<std::size_t>(b));
        const std::size_t lo = static_cast<std::size_t>(b) * kSubjectsPerBlock;
        const std::size_t hi = std::min(n, lo + kSubjectsPerBlock);
        for (std::size_t i = lo; i < hi; ++i) {
            out[i] = make(rng, static_cast<std::int64_t>(i + 1), block_resamples[b]);
        }
    }
    for (auto r : block_resamples) resamples += r;
    return out;
}

struct TreatedBlock {
    std::vector<SubjectRecord> kept;
    std::vector<std::size_t> position;  // candidate index within the block
    std::size_t resamples = 0;
};

}  // namespace

std::string_view to_string(Scenario s) noexcept {
    return s == Scenario::GFactor ? "gfactor" : "beta";
}

Scenario parse_scenario(std::string_view s) {
    if (s == "beta" || s == "BetaHeterogeneity" || s == "1") return Scenario::BetaHeterogeneity;
    if (s == "gfactor" || s == "GFactor" || s == "2") return Scenario::GFactor;
    throw ConfigError("unknown scenario '" + std::string(s) + "' (expected beta or gfactor)");
}

void SimulationConfig::validate() const {
    const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (n_per_cohort == 0) throw ConfigError("n_per_cohort must be positive");
    if (!positive(wait_rate)) throw ConfigError("wait_rate must be a positive finite rate");
    if (!positive(conditional_hr)) throw ConfigError("conditional_hr must be positive");
    if (censoring_horizon && !positive(*censoring_horizon)) {
        throw ConfigError("censoring_horizon must be positive");
    }
    if (scenario == Scenario::BetaHeterogeneity) {
        if (!positive(beta_a) || !positive(beta_b)) throw ConfigError("beta_a and beta_b must be positive");
    } else {
        if (!positive(base_rate)) throw ConfigError("base_rate must be positive");
        if (!(p_g > 0.0 && p_g < 1.0)) throw ConfigError("p_g must lie in (0, 1)");
        if (!positive(g_multiplier)) throw ConfigError("g_multiplier must be positive");
    }
}

FrailtyDraws draw_frailty(const SimulationConfig& config, std::size_t n, std::mt19937_64& rng) {
    config.validate();
    FrailtyDraws out;
    out.rates.reserve(n);
    if (config.scenario == Scenario::GFactor) out.g_carrier.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = draw_one(config, rng, out.resamples);
        out.rates.push_back(f.rate);
        if (f.g) out.g_carrier.push_back(*f.g ? 1 : 0);
    }
    return out;
}

SimulatedCohorts simulate_cohorts(const SimulationConfig& config) {
    config.validate();
    SimulatedCohorts out;
    const std::size_t n = config.n_per_cohort;

    out.control.records = generate_fixed(
        config, kControlStream,
        [&](std::mt19937_64& rng, std::int64_t id, std::size_t& rs) {
            return control_record(config, rng, id, rs);
        },
        out.frailty_resamples);

    // Candidate blocks are drawn in batches and consumed in block order, so the
    // retained set is the same whatever the batch size or worker count.
    const std::size_t batch = std::max<std::size_t>(16, 4 * static_cast<std::size_t>(kernels::worker_count()));
    auto& treated = out.treated.records;
    treated.reserve(n);
    std::size_t next_block = 0;
    while (treated.size() < n) {
        std::vector<TreatedBlock> blocks(batch);
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(batch); ++k) {
            auto rng = block_rng(config.seed, kTreatedStream, next_block + static_cast<std::size_t>(k));
            auto& blk = blocks[static_cast<std::size_t>(k)];
            for (std::size_t j = 0; j < kSubjectsPerBlock; ++j) {
                auto cand = treated_candidate(config, rng, blk.resamples);
                if (cand.selected) {
                    blk.kept.push_back(std::move(cand.record));
                    blk.position.push_back(j);
                }
            }
        }
        for (std::size_t k = 0; k < batch && treated.size() < n; ++k) {
            auto& blk = blocks[k];
            out.frailty_resamples += blk.resamples;
            const std::size_t take = std::min(blk.kept.size(), n - treated.size());
            for (std::size_t j = 0; j < take; ++j) treated.push_back(std::move(blk.kept[j]));
            out.candidates = (next_block + k) * kSubjectsPerBlock +
                             (take == blk.kept.size() && treated.size() < n ? kSubjectsPerBlock
                                                                           : blk.position[take - 1] + 1);
        }
        next_block += batch;
        const double rate = static_cast<double>(treated.size()) /
                            static_cast<double>(next_block * kSubjectsPerBlock);
        if (treated.size() < n && rate < kMinAcceptanceRate) {
            throw ConfigError("treated selection rate " + std::to_string(rate) + " is below the floor " +
                              std::to_string(kMinAcceptanceRate) +
                              "; wait times are too long relative to event times");
        }
    }
    out.acceptance_rate = static_cast<double>(n) / static_cast<double>(out.candidates);
    for (std::size_t i = 0; i < n; ++i) treated[i].id = static_cast<std::int64_t>(n + i + 1);
    return out;
}

SimulatedProspective simulate_prospective(const SimulationConfig& config) {
    config.validate();
    SimulatedProspective out;
    out.cohort.records = generate_fixed(
        config, kProspectiveStream,
        [&](std::mt19937_64& rng, std::int64_t id, std::size_t& rs) {
            return prospective_record(config, rng, id, rs);
        },
        out.frailty_resamples);
    return out;
}

CountingProcessData build_counterfactual(const SimulatedCohorts& cohorts, Estimand estimand,
                                         std::optional<double> horizon) {
    CountingProcessData data({"treated"});
    std::int64_t row_id = 0;
    const auto add = [&](std::int64_t cluster, double entry, double t, double tx) {
        const auto [time, status] = censor(t, horizon);
        data.add(++row_id, cluster, entry, entry + time, status, std::span<const double>(&tx, 1));
    };
    const auto latent = [](const std::optional<double>& v, const SubjectRecord& r) {
        if (!v) {
            throw DataError("subject " + std::to_string(r.id) +
                            " has no latent event times; counterfactuals need simulated cohorts");
        }
        return *v;
    };
    if (estimand != Estimand::ATT) {
        data.reserve(2 * cohorts.control.records.size());
        for (const auto& r : cohorts.control.records) {
            add(r.id, 0.0, latent(r.latent_untreated_time, r), 0.0);
            add(r.id, 0.0, latent(r.latent_treated_time, r), 1.0);
        }
    }
    if (estimand != Estimand::ATC) {
        data.reserve(data.size() + 2 * cohorts.treated.records.size());
        for (const auto& r : cohorts.treated.records) {
            const double w = r.entry_time;
            add(r.id, w, latent(r.latent_treated_time, r), 1.0);
            add(r.id, w, latent(r.latent_untreated_time, r) - w, 0.0);
        }
    }
    return data;
}

CountingProcessData build_counterfactual(const SimulationConfig& config, Estimand estimand) {
    return build_counterfactual(simulate_cohorts(config), estimand, config.censoring_horizon);
}

namespace {

EstimatorResult fit_truth(const CountingProcessData& data, Estimand estimand, bool robust) {
    CoxOptions options;
    options.cluster_variance = robust;
    const auto fit = cox_fit(data, options);
    if (!fit.converged) throw NumericalError("true marginal hazard ratio: Cox fit did not converge");
    const auto hr = hazard_ratio(fit, 0, 0.95, robust);
    EstimatorResult r;
    r.method = Method::Truth;
    r.estimand = estimand;
    r.hr = hr.hr;
    r.ci_low = hr.ci_low;
    r.ci_high = hr.ci_high;
    r.se_log_hr = hr.se_log_hr;
    r.n_subjects = fit.n_clusters > 0 ? fit.n_clusters : fit.n_rows;
    r.n_events = fit.n_events;
    r.robust_se_used = robust;
    return r;
}

}  // namespace

EstimatorResult true_marginal_hr(const SimulatedCohorts& cohorts, Estimand estimand,
                                 std::optional<double> horizon) {
    return fit_truth(build_counterfactual(cohorts, estimand, horizon), estimand, true);
}

EstimatorResult true_marginal_hr(const SimulationConfig& config, Estimand estimand) {
    return true_marginal_hr(simulate_cohorts(config), estimand, config.censoring_horizon);
}

CalibrationResult calibrate_conditional_hr(const SimulationConfig& config, double target,
                                           const CalibrationOptions& options) {
    config.validate();
    if (!(std::isfinite(target) && target > 0.0)) throw ConfigError("calibration target must be positive");
    if (!(options.tolerance > 0.0)) throw ConfigError("calibration tolerance must be positive");
    if (!(options.lower > 0.0 && options.upper > options.lower)) {
        throw ConfigError("calibration bracket must satisfy 0 < lower < upper");
    }

    CalibrationResult out;
    const auto evaluate = [&](double theta) {
        auto c = config;
        c.conditional_hr = theta;
        const auto cohorts = simulate_cohorts(c);
        const double hr =
            fit_truth(build_counterfactual(cohorts, Estimand::ATE, c.censoring_horizon), Estimand::ATE, false).hr;
        for (const auto& s : out.trace) {
            const bool broken = (s.conditional_hr < theta && s.marginal_hr > hr + options.tolerance) ||
                                (s.conditional_hr > theta && s.marginal_hr + options.tolerance < hr);
            if (broken) {
                out.warnings.push_back("non-monotone calibration: conditional_hr " + std::to_string(theta) +
                                       " gives " + std::to_string(hr) + " against " +
                                       std::to_string(s.marginal_hr) + " at " +
                                       std::to_string(s.conditional_hr));
            }
        }
        out.trace.push_back({theta, hr});
        return hr;
    };
    const auto accept = [&](double theta, double hr) {
        out.conditional_hr = theta;
        out.marginal_hr = hr;
        out.converged = true;
        return out;
    };

    double lo = options.lower;
    double hi = options.upper;
    const double f_lo = evaluate(lo);
    if (std::abs(f_lo - target) <= options.tolerance) return accept(lo, f_lo);
    const double f_hi = evaluate(hi);
    if (std::abs(f_hi - target) <= options.tolerance) return accept(hi, f_hi);
    if (target < f_lo || target > f_hi) {
        throw ConfigError("calibration target " + std::to_string(target) + " is outside the bracket: marginal HR " +
                          std::to_string(f_lo) + " at conditional_hr " + std::to_string(lo) + ", " +
                          std::to_string(f_hi) + " at " + std::to_string(hi));
    }
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double f = evaluate(mid);
        if (std::abs(f - target) <= options.tolerance) return accept(mid, f);
        (f < target ? lo : hi) = mid;
    }
    const auto best = std::min_element(out.trace.begin(), out.trace.end(), [&](const auto& a, const auto& b) {
        return std::abs(a.marginal_hr - target) < std::abs(b.marginal_hr - target);
    });
    out.conditional_hr = best->conditional_hr;
    out.marginal_hr = best->marginal_hr;
    out.warnings.push_back("calibration stopped after " + std::to_string(options.max_iterations) +
                           " bisection steps without reaching the tolerance");
    return out;
}

}  // namespace survbias
