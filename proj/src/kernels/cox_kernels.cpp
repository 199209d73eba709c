#include "survbias/kernels/cox_kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>

#include <omp.h>

#include "survbias/error.hpp"

namespace survbias::kernels {

int worker_count() { return omp_get_max_threads(); }

void set_worker_count(int workers) {
    static const int runtime_default = omp_get_max_threads();
    omp_set_num_threads(workers > 0 ? workers : runtime_default);
}

namespace {

// Packed moment vector of a set of rows: [sum r, sum r x (p), sum r x x' (upper, p(p+1)/2)].
struct MomentShape {
    std::size_t p;
    std::size_t size() const noexcept { return 1 + p + p * (p + 1) / 2; }
    std::size_t tri(std::size_t j, std::size_t k) const noexcept {
        return 1 + p + j * (2 * p - j + 1) / 2 + (k - j);
    }
};

inline void add_row(const MomentShape& shape, double* acc, double r, const double* x, double sign) {
    const std::size_t p = shape.p;
    const double w = sign * r;
    acc[0] += w;
    double* s2 = acc + 1 + p;
    for (std::size_t j = 0; j < p; ++j) {
        const double wx = w * x[j];
        acc[1 + j] += wx;
        for (std::size_t k = j; k < p; ++k) *s2++ += wx * x[k];
    }
}

// Quantities per distinct event time used to build score residuals.
struct GroupTerms {
    std::size_t p = 0;
    std::vector<double> h, e;        // sum 1/D_k and sum (1-c_k)/D_k
    std::vector<double> g, f, mean;  // p per group: sum xbar_k/D_k, sum (1-c_k) xbar_k/D_k, mean xbar
    void resize(std::size_t groups, std::size_t p_) {
        p = p_;
        h.assign(groups, 0.0);
        e.assign(groups, 0.0);
        g.assign(groups * p, 0.0);
        f.assign(groups * p, 0.0);
        mean.assign(groups * p, 0.0);
    }
};

// Accumulator for loglik, score and packed information of a run of event times.
struct LikelihoodAcc {
    std::vector<double> v;  // [loglik, score (p), info packed]
    explicit LikelihoodAcc(const MomentShape& s) : v(s.size(), 0.0) {}
};

// Contribution of one distinct event time given the at-risk moments.
// Efron: the k-th of d tied deaths sees the risk set with a fraction k/d of the
// dying rows' weight removed; Breslow uses the full risk set for all d.
class GroupVisitor {
public:
    GroupVisitor(const MomentShape& shape, std::span<const double> x, std::span<const double> eta,
                 std::span<const double> risk, Ties ties)
        : shape_(shape), x_(x), eta_(eta), risk_(risk), ties_(ties) {}

    // `acc` may be null when only residual terms are wanted, `terms` may be null.
    void operator()(const StratumLayout& s, std::size_t group, const double* at_risk,
                    double* acc, GroupTerms* terms, double* scratch) const {
        const std::size_t p = shape_.p;
        const std::size_t m = shape_.size();
        double* dead = scratch;              // m
        double* xbar = scratch + m;          // p
        double* sum_x = scratch + m + p;     // p
        std::fill(scratch, scratch + m + 2 * p, 0.0);

        double sum_eta = 0.0;
        const std::uint32_t b = s.death_begin[group];
        const std::uint32_t end = s.death_begin[group + 1];
        for (std::uint32_t k = b; k < end; ++k) {
            const std::size_t i = s.deaths[k];
            const double* xi = x_.data() + i * p;
            add_row(shape_, dead, risk_[i], xi, 1.0);
            sum_eta += eta_[i];
            for (std::size_t j = 0; j < p; ++j) sum_x[j] += xi[j];
        }
        const double d = static_cast<double>(end - b);
        if (acc != nullptr) {
            acc[0] += sum_eta;
            for (std::size_t j = 0; j < p; ++j) acc[1 + j] += sum_x[j];
        }

        const std::size_t ndeath = end - b;
        for (std::size_t k = 0; k < ndeath; ++k) {
            const double c = ties_ == Ties::Efron ? static_cast<double>(k) / d : 0.0;
            const double den = at_risk[0] - c * dead[0];
            if (!(den > 0.0)) {
                degenerate_.store(true, std::memory_order_relaxed);
                return;
            }
            for (std::size_t j = 0; j < p; ++j) xbar[j] = (at_risk[1 + j] - c * dead[1 + j]) / den;
            if (acc != nullptr) {
                acc[0] -= std::log(den);
                double* info = acc + 1 + p;
                for (std::size_t j = 0; j < p; ++j) {
                    acc[1 + j] -= xbar[j];
                    for (std::size_t l = j; l < p; ++l) {
                        const std::size_t t = shape_.tri(j, l);
                        *info++ += (at_risk[t] - c * dead[t]) / den - xbar[j] * xbar[l];
                    }
                }
            }
            if (terms != nullptr) {
                terms->h[group] += 1.0 / den;
                terms->e[group] += (1.0 - c) / den;
                for (std::size_t j = 0; j < p; ++j) {
                    terms->g[group * p + j] += xbar[j] / den;
                    terms->f[group * p + j] += (1.0 - c) * xbar[j] / den;
                    terms->mean[group * p + j] += xbar[j] / d;
                }
            }
        }
    }

    std::size_t scratch_size() const noexcept { return shape_.size() + 2 * shape_.p; }

    // Set when a risk-set denominator was not positive; checked outside parallel regions.
    void check() const {
        if (degenerate_.load()) throw NumericalError("empty or negative risk-set denominator");
    }

private:
    mutable std::atomic<bool> degenerate_{false};
    MomentShape shape_;
    std::span<const double> x_;
    std::span<const double> eta_;
    std::span<const double> risk_;
    Ties ties_;
};

// Serial reference: sweep event times from latest to earliest, adding rows
// whose stop has been reached and removing rows whose start is not before t.
void sweep_serial(const StratumLayout& s, const MomentShape& shape, std::span<const double> x,
                  std::span<const double> risk, const GroupVisitor& visit, double* acc,
                  GroupTerms* terms) {
    const std::size_t p = shape.p;
    std::vector<double> at_risk(shape.size(), 0.0);
    std::vector<double> scratch(visit.scratch_size());
    std::size_t added = 0;
    std::size_t removed = 0;
    for (std::size_t g = 0; g < s.n_groups(); ++g) {
        for (; added < s.n_stop_ge[g]; ++added) {
            const std::size_t i = s.by_stop[added];
            add_row(shape, at_risk.data(), risk[i], x.data() + i * p, 1.0);
        }
        for (; removed < s.n_start_ge[g]; ++removed) {
            const std::size_t i = s.by_start[removed];
            add_row(shape, at_risk.data(), risk[i], x.data() + i * p, -1.0);
        }
        visit(s, g, at_risk.data(), acc, terms, scratch.data());
    }
}

// Walks `order` in fixed chunks; `on_checkpoint(g, moments, chunk)` fires for
// every event time g once the prefix of length counts[g] has been summed.
template <class OnCheckpoint>
void chunked_prefix_scan(std::span<const std::uint32_t> order, std::span<const std::uint32_t> counts,
                         const MomentShape& shape, std::span<const double> x,
                         std::span<const double> risk, OnCheckpoint&& on_checkpoint) {
    const std::size_t n = order.size();
    const std::size_t m = shape.size();
    const std::size_t p = shape.p;
    const std::size_t n_chunks = (n + kChunkRows - 1) / kChunkRows;
    std::vector<double> offsets((n_chunks + 1) * m, 0.0);

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
        double* tot = offsets.data() + (c + 1) * m;
        const std::size_t lo = c * kChunkRows;
        const std::size_t hi = std::min(n, lo + kChunkRows);
        for (std::size_t pos = lo; pos < hi; ++pos) {
            const std::size_t i = order[pos];
            add_row(shape, tot, risk[i], x.data() + i * p, 1.0);
        }
    }
    for (std::size_t c = 1; c <= n_chunks; ++c) {
        for (std::size_t k = 0; k < m; ++k) offsets[c * m + k] += offsets[(c - 1) * m + k];
    }

    // Checkpoints with count 0 see an empty prefix.
    std::vector<double> zero(m, 0.0);
    std::size_t first_nonzero = 0;
    while (first_nonzero < counts.size() && counts[first_nonzero] == 0) {
        on_checkpoint(first_nonzero, zero.data(), std::size_t{0});
        ++first_nonzero;
    }

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
        const std::size_t lo = c * kChunkRows;
        const std::size_t hi = std::min(n, lo + kChunkRows);
        auto g = static_cast<std::size_t>(
            std::lower_bound(counts.begin() + first_nonzero, counts.end(), lo + 1) - counts.begin());
        if (g == counts.size() || counts[g] > hi) continue;
        std::vector<double> running(offsets.begin() + c * m, offsets.begin() + (c + 1) * m);
        for (std::size_t pos = lo; pos < hi && g < counts.size(); ++pos) {
            const std::size_t i = order[pos];
            add_row(shape, running.data(), risk[i], x.data() + i * p, 1.0);
            while (g < counts.size() && counts[g] == pos + 1) {
                on_checkpoint(g, running.data(), static_cast<std::size_t>(c));
                ++g;
            }
        }
    }
}

// Parallel risk-set sums: prefix(by stop) - prefix(by start), chunk-local
// accumulation of the group contributions, then a fixed-order reduction.
void sweep_parallel(const StratumLayout& s, const MomentShape& shape, std::span<const double> x,
                    std::span<const double> risk, const GroupVisitor& visit, double* acc,
                    GroupTerms* terms) {
    const std::size_t m = shape.size();
    const std::size_t G = s.n_groups();

    std::vector<double> leaving;
    if (s.truncated) {
        leaving.assign(G * m, 0.0);
        chunked_prefix_scan(s.by_start, s.n_start_ge, shape, x, risk,
                            [&](std::size_t g, const double* sums, std::size_t) {
                                std::copy(sums, sums + m, leaving.begin() + g * m);
                            });
    }

    const std::size_t n_chunks = std::max<std::size_t>((s.by_stop.size() + kChunkRows - 1) / kChunkRows, 1);
    const std::size_t acc_size = acc != nullptr ? m : 0;
    const std::size_t scratch_size = m + visit.scratch_size();
    std::vector<double> partial(n_chunks * acc_size, 0.0);
    std::vector<double> scratch(n_chunks * scratch_size, 0.0);
    chunked_prefix_scan(
        s.by_stop, s.n_stop_ge, shape, x, risk,
        [&](std::size_t g, const double* sums, std::size_t chunk) {
            double* at_risk = scratch.data() + chunk * scratch_size;
            for (std::size_t k = 0; k < m; ++k) {
                at_risk[k] = s.truncated ? sums[k] - leaving[g * m + k] : sums[k];
            }
            visit(s, g, at_risk, acc != nullptr ? partial.data() + chunk * m : nullptr, terms,
                  at_risk + m);
        });
    if (acc != nullptr) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            for (std::size_t k = 0; k < m; ++k) acc[k] += partial[c * m + k];
        }
    }
}

void sweep(Execution execution, const StratumLayout& s, const MomentShape& shape,
           std::span<const double> x, std::span<const double> risk, const GroupVisitor& visit,
           double* acc, GroupTerms* terms) {
    if (execution == Execution::Serial) {
        sweep_serial(s, shape, x, risk, visit, acc, terms);
    } else {
        sweep_parallel(s, shape, x, risk, visit, acc, terms);
    }
}

// exp(eta - max eta); the shift cancels in every ratio and in the log likelihood.
std::vector<double> shifted_risk(std::span<const double> eta, std::vector<double>& shifted_eta,
                                 Execution execution) {
    const std::size_t n = eta.size();
    double top = -std::numeric_limits<double>::infinity();
    for (double v : eta) top = std::max(top, v);
    if (!std::isfinite(top)) throw NumericalError("non-finite linear predictor");
    shifted_eta.resize(n);
    std::vector<double> risk(n);
    if (execution == Execution::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
            shifted_eta[i] = eta[i] - top;
            risk[i] = std::exp(shifted_eta[i]);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            shifted_eta[i] = eta[i] - top;
            risk[i] = std::exp(shifted_eta[i]);
        }
    }
    return risk;
}

}  // namespace

RiskSetLayout RiskSetLayout::build(const CountingProcessData& data) {
    RiskSetLayout layout;
    layout.n_rows = data.size();
    layout.n_covariates = data.n_covariates();
    if (data.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw DataError("dataset too large for the risk-set layout");
    }

    const auto strata = data.strata();
    std::vector<int> labels(strata.begin(), strata.end());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

    std::vector<std::vector<std::uint32_t>> members(labels.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto s = std::lower_bound(labels.begin(), labels.end(), strata[i]) - labels.begin();
        members[s].push_back(static_cast<std::uint32_t>(i));
    }

    const auto start = data.starts();
    const auto stop = data.stops();
    const auto status = data.statuses();
    for (auto& rows : members) {
        StratumLayout s;
        s.by_stop = rows;
        std::stable_sort(s.by_stop.begin(), s.by_stop.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return stop[a] > stop[b]; });
        s.by_start = std::move(rows);
        std::stable_sort(s.by_start.begin(), s.by_start.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return start[a] > start[b]; });

        s.death_begin.push_back(0);
        for (std::uint32_t i : s.by_stop) {
            if (status[i] != 1) continue;
            if (s.times.empty() || stop[i] != s.times.back()) {
                if (!s.times.empty()) s.death_begin.push_back(static_cast<std::uint32_t>(s.deaths.size()));
                s.times.push_back(stop[i]);
            }
            s.deaths.push_back(i);
        }
        if (!s.times.empty()) s.death_begin.push_back(static_cast<std::uint32_t>(s.deaths.size()));
        if (s.times.empty()) continue;  // a stratum without events contributes nothing

        s.n_stop_ge.reserve(s.times.size());
        s.n_start_ge.reserve(s.times.size());
        std::size_t a = 0;
        std::size_t b = 0;
        for (double t : s.times) {
            while (a < s.by_stop.size() && stop[s.by_stop[a]] >= t) ++a;
            while (b < s.by_start.size() && start[s.by_start[b]] >= t) ++b;
            s.n_stop_ge.push_back(static_cast<std::uint32_t>(a));
            s.n_start_ge.push_back(static_cast<std::uint32_t>(b));
        }
        s.truncated = s.n_start_ge.back() > 0;
        layout.strata.push_back(std::move(s));
    }
    return layout;
}

std::vector<double> linear_predictor(std::span<const double> x, std::size_t p,
                                     const Eigen::VectorXd& beta, Execution execution) {
    const std::size_t n = p == 0 ? 0 : x.size() / p;
    std::vector<double> eta(n, 0.0);
    const auto row = [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = 0; j < p; ++j) s += x[i * p + j] * beta[static_cast<Eigen::Index>(j)];
        eta[i] = s;
    };
    if (execution == Execution::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) row(i);
    } else {
        for (std::size_t i = 0; i < n; ++i) row(i);
    }
    return eta;
}

PartialLikelihood evaluate(const RiskSetLayout& layout, std::span<const double> x,
                           std::span<const double> eta, Ties ties, Execution execution) {
    const MomentShape shape{layout.n_covariates};
    const std::size_t p = shape.p;
    std::vector<double> shifted;
    const auto risk = shifted_risk(eta, shifted, execution);
    const GroupVisitor visit(shape, x, shifted, risk, ties);

    LikelihoodAcc total(shape);
    for (const auto& s : layout.strata) {
        LikelihoodAcc acc(shape);
        sweep(execution, s, shape, x, risk, visit, acc.v.data(), nullptr);
        for (std::size_t k = 0; k < total.v.size(); ++k) total.v[k] += acc.v[k];
    }
    visit.check();

    PartialLikelihood out;
    out.loglik = total.v[0];
    out.score = Eigen::Map<const Eigen::VectorXd>(total.v.data() + 1, static_cast<Eigen::Index>(p));
    out.information.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    const double* info = total.v.data() + 1 + p;
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t l = j; l < p; ++l) {
            out.information(j, l) = out.information(l, j) = *info++;
        }
    }
    return out;
}

Eigen::MatrixXd score_residuals(const RiskSetLayout& layout, const CountingProcessData& data,
                                std::span<const double> x, std::span<const double> eta, Ties ties,
                                Execution execution) {
    const MomentShape shape{layout.n_covariates};
    const std::size_t p = shape.p;
    std::vector<double> shifted;
    const auto risk = shifted_risk(eta, shifted, execution);
    const GroupVisitor visit(shape, x, shifted, risk, ties);
    const auto start = data.starts();
    const auto stop = data.stops();
    const auto status = data.statuses();

    // Row-major so that each row's residual vector is contiguous.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layout.n_rows), static_cast<Eigen::Index>(p));

    for (const auto& s : layout.strata) {
        const std::size_t G = s.n_groups();
        GroupTerms terms;
        terms.resize(G, p);
        sweep(execution, s, shape, x, risk, visit, nullptr, &terms);
        visit.check();

        // cum[a] sums the a earliest event times.
        std::vector<double> cum_h(G + 1, 0.0);
        std::vector<double> cum_g((G + 1) * p, 0.0);
        for (std::size_t a = 0; a < G; ++a) {
            const std::size_t g = G - 1 - a;
            cum_h[a + 1] = cum_h[a] + terms.h[g];
            for (std::size_t j = 0; j < p; ++j) {
                cum_g[(a + 1) * p + j] = cum_g[a * p + j] + terms.g[g * p + j];
            }
        }
        const auto n_at_or_before = [&](double tau) {
            const auto gt = std::partition_point(s.times.begin(), s.times.end(),
                                                 [tau](double t) { return t > tau; });
            return G - static_cast<std::size_t>(gt - s.times.begin());
        };

        // Rows at risk at event times in (start, stop] pick up -r (x - xbar) dLambda;
        // a dying row also gets x - mean xbar and Efron's reduced weight at its own time.
        const auto residual = [&](std::size_t i) {
            const std::size_t hi = n_at_or_before(stop[i]);
            const std::size_t lo = n_at_or_before(start[i]);
            if (hi == lo) return;
            const bool died = status[i] == 1;
            const std::size_t own = G - hi;
            const double* xi = x.data() + i * p;
            double* u = out.data() + i * p;
            double h = cum_h[hi] - cum_h[lo];
            if (died) h -= terms.h[own] - terms.e[own];
            for (std::size_t j = 0; j < p; ++j) {
                double gj = cum_g[hi * p + j] - cum_g[lo * p + j];
                if (died) gj -= terms.g[own * p + j] - terms.f[own * p + j];
                u[j] = -risk[i] * (xi[j] * h - gj);
                if (died) u[j] += xi[j] - terms.mean[own * p + j];
            }
        };
        const std::size_t rows = s.by_stop.size();
        if (execution == Execution::Parallel) {
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(rows); ++k) residual(s.by_stop[k]);
        } else {
            for (std::size_t k = 0; k < rows; ++k) residual(s.by_stop[k]);
        }
    }
    return out;
}

}  // namespace survbias::kernels
