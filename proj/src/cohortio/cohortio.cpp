#include "survbias/cohortio/cohortio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "survbias/error.hpp"

namespace survbias::cohortio {

namespace {

// ---- CSV plumbing -------------------------------------------------------

std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                out.back() += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.emplace_back();
        } else {
            out.back() += ch;
        }
    }
    return out;
}

std::string quote(std::string_view s) {
    std::string clean(s);
    for (char& ch : clean) {
        if (ch == '\n' || ch == '\r') ch = ' ';
    }
    if (clean.find_first_of(",\"") == std::string::npos) return clean;
    std::string out = "\"";
    for (char ch : clean) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

// Line-oriented reader that remembers where it is for error messages.
class CsvReader {
public:
    CsvReader(std::istream& in, std::string_view source) : in_(in), source_(source) {
        std::string line;
        if (!next_line(line)) throw DataError(std::string(source_) + ": empty file, expected a header line");
        header_ = split_fields(line);
        for (std::size_t j = 0; j < header_.size(); ++j) {
            if (!index_.emplace(header_[j], j).second) {
                throw DataError(fmt::format("{}: line 1: duplicate column '{}'", source_, header_[j]));
            }
        }
    }

    const std::vector<std::string>& header() const { return header_; }
    std::optional<std::size_t> column(std::string_view name) const {
        const auto it = index_.find(std::string(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t require(std::string_view name) const {
        if (auto c = column(name)) return *c;
        throw DataError(fmt::format("{}: missing required column '{}'", source_, name));
    }

    bool next(std::vector<std::string>& fields) {
        std::string line;
        if (!next_line(line)) return false;
        fields = split_fields(line);
        if (fields.size() != header_.size()) {
            throw DataError(fmt::format("{}: line {}: expected {} fields, found {}", source_, line_, header_.size(),
                                        fields.size()));
        }
        return true;
    }

    [[noreturn]] void fail(std::size_t col, std::string_view value, std::string_view why) const {
        throw DataError(fmt::format("{}: line {}, column '{}': {} (got '{}')", source_, line_, header_[col], why,
                                    value));
    }
    [[noreturn]] void fail(std::string_view why) const {
        throw DataError(fmt::format("{}: line {}: {}", source_, line_, why));
    }

    double real(const std::vector<std::string>& f, std::size_t col) const {
        const auto& s = f[col];
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) fail(col, s, "expected a real number");
        if (!std::isfinite(v)) fail(col, s, "expected a finite value");
        return v;
    }
    std::optional<double> optional_real(const std::vector<std::string>& f, std::optional<std::size_t> col) const {
        if (!col || f[*col].empty()) return std::nullopt;
        return real(f, *col);
    }
    std::int64_t integer(const std::vector<std::string>& f, std::size_t col) const {
        const auto& s = f[col];
        std::int64_t v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) fail(col, s, "expected an integer");
        return v;
    }
    int flag(const std::vector<std::string>& f, std::size_t col) const {
        const auto& s = f[col];
        if (s == "0") return 0;
        if (s == "1") return 1;
        fail(col, s, "expected 0 or 1");
    }

    std::size_t line() const { return line_; }

private:
    bool next_line(std::string& line) {
        if (!std::getline(in_, line)) return false;
        ++line_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    }

    std::istream& in_;
    std::string_view source_;
    std::vector<std::string> header_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::size_t line_ = 0;
};

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
    return in;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

std::string optional_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

const std::vector<std::string> kLatentColumns{"frailty_rate", "g_carrier", "latent_untreated_time",
                                              "latent_treated_time"};

}  // namespace

std::string format_real(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

// ---- cohorts -------------------------------------------------------------

void write_cohort(const CohortData& data, std::ostream& out, const WriteOptions& options) {
    out << "id,cohort,entry_time,event_time,event,wait_time,treatment_start";
    for (const auto& name : data.covariate_names) out << ',' << quote(std::string(kCovariatePrefix) + name);
    if (options.latent) {
        for (const auto& name : kLatentColumns) out << ',' << name;
    }
    out << '\n';
    for (const auto& r : data.records) {
        if (r.covariates.size() != data.covariate_names.size()) {
            throw DataError("record id " + std::to_string(r.id) + " has " + std::to_string(r.covariates.size()) +
                            " covariates, expected " + std::to_string(data.covariate_names.size()));
        }
        out << r.id << ',' << to_string(r.cohort) << ',' << format_real(r.entry_time) << ','
            << format_real(r.event_time) << ',' << r.event << ',' << optional_real(r.wait_time) << ','
            << optional_real(r.treatment_start);
        for (double x : r.covariates) out << ',' << format_real(x);
        if (options.latent) {
            out << ',' << optional_real(r.frailty_rate) << ',';
            if (r.g_carrier) out << (*r.g_carrier ? '1' : '0');
            out << ',' << optional_real(r.latent_untreated_time) << ',' << optional_real(r.latent_treated_time);
        }
        out << '\n';
    }
}

void write_cohort(const CohortData& data, const std::filesystem::path& path, const WriteOptions& options) {
    auto out = open_out(path);
    write_cohort(data, out, options);
    finish(out, path);
}

CohortData read_cohort(std::istream& in, const ReadOptions& options, std::string_view source) {
    CsvReader csv(in, source);
    const std::size_t c_id = csv.require("id");
    const std::size_t c_cohort = csv.require("cohort");
    const std::size_t c_entry = csv.require("entry_time");
    const std::size_t c_time = csv.require("event_time");
    const std::size_t c_event = csv.require("event");
    const auto c_wait = csv.column("wait_time");
    const auto c_start = csv.column("treatment_start");
    const auto c_frailty = csv.column("frailty_rate");
    const auto c_g = csv.column("g_carrier");
    const auto c_t0 = csv.column("latent_untreated_time");
    const auto c_t1 = csv.column("latent_treated_time");

    CohortData data;
    std::vector<std::size_t> covariate_cols;
    const std::set<std::string> known{"id", "cohort", "entry_time", "event_time", "event", "wait_time",
                                      "treatment_start", "frailty_rate", "g_carrier", "latent_untreated_time",
                                      "latent_treated_time"};
    for (std::size_t j = 0; j < csv.header().size(); ++j) {
        const auto& name = csv.header()[j];
        if (name.starts_with(kCovariatePrefix) && name.size() > kCovariatePrefix.size()) {
            covariate_cols.push_back(j);
            data.covariate_names.push_back(name.substr(kCovariatePrefix.size()));
        } else if (!known.contains(name)) {
            throw DataError(fmt::format("{}: unknown column '{}' (covariates need the '{}' prefix)", source, name,
                                        kCovariatePrefix));
        }
    }

    std::set<std::pair<std::int64_t, Cohort>> seen;
    std::vector<std::string> f;
    while (csv.next(f)) {
        SubjectRecord r;
        r.id = csv.integer(f, c_id);
        try {
            r.cohort = parse_cohort(f[c_cohort]);
        } catch (const DataError&) {
            csv.fail(c_cohort, f[c_cohort], "expected control, treated or prospective");
        }
        r.entry_time = csv.real(f, c_entry);
        if (r.entry_time < 0.0) csv.fail(c_entry, f[c_entry], "entry time must be non-negative");
        r.event_time = csv.real(f, c_time);
        if (!(r.event_time > 0.0)) csv.fail(c_time, f[c_time], "event time must be positive");
        r.event = csv.flag(f, c_event);
        r.wait_time = csv.optional_real(f, c_wait);
        if (r.wait_time && *r.wait_time < 0.0) csv.fail(*c_wait, f[*c_wait], "wait time must be non-negative");
        if (r.cohort == Cohort::Treated && !r.wait_time) {
            if (!c_wait) csv.fail("treated record but the file has no 'wait_time' column");
            csv.fail(*c_wait, f[*c_wait], "treated records need a wait time");
        }
        r.treatment_start = csv.optional_real(f, c_start);
        if (r.treatment_start && *r.treatment_start < 0.0) {
            csv.fail(*c_start, f[*c_start], "treatment start must be non-negative");
        }
        for (auto c : covariate_cols) r.covariates.push_back(csv.real(f, c));
        if (options.latent) {
            r.frailty_rate = csv.optional_real(f, c_frailty);
            if (c_g && !f[*c_g].empty()) r.g_carrier = csv.flag(f, *c_g) == 1;
            r.latent_untreated_time = csv.optional_real(f, c_t0);
            r.latent_treated_time = csv.optional_real(f, c_t1);
        }
        if (!seen.emplace(r.id, r.cohort).second) {
            csv.fail(fmt::format("duplicate record for id {} in cohort {}", r.id, to_string(r.cohort)));
        }
        data.records.push_back(std::move(r));
    }
    return data;
}

CohortData read_cohort(const std::filesystem::path& path, const ReadOptions& options) {
    auto in = open_in(path);
    return read_cohort(in, options, path.string());
}

// ---- counting process ----------------------------------------------------

void write_counting_process(const CountingProcessData& data, std::ostream& out) {
    out << "subject_id,cluster_id,start,stop,status,stratum";
    for (const auto& name : data.covariate_names()) out << ',' << quote(name);
    out << '\n';
    const auto subject = data.subject_ids();
    const auto cluster = data.cluster_ids();
    const auto start = data.starts();
    const auto stop = data.stops();
    const auto status = data.statuses();
    const auto stratum = data.strata();
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << subject[i] << ',' << cluster[i] << ',' << format_real(start[i]) << ',' << format_real(stop[i]) << ','
            << static_cast<int>(status[i]) << ',' << stratum[i];
        for (double x : data.covariates(i)) out << ',' << format_real(x);
        out << '\n';
    }
}

void write_counting_process(const CountingProcessData& data, const std::filesystem::path& path) {
    auto out = open_out(path);
    write_counting_process(data, out);
    finish(out, path);
}

CountingProcessData read_counting_process(std::istream& in, std::string_view source) {
    CsvReader csv(in, source);
    const std::vector<std::string> fixed{"subject_id", "cluster_id", "start", "stop", "status", "stratum"};
    for (std::size_t j = 0; j < fixed.size(); ++j) {
        if (j >= csv.header().size() || csv.header()[j] != fixed[j]) {
            throw DataError(fmt::format("{}: column {} must be '{}'", source, j + 1, fixed[j]));
        }
    }
    std::vector<std::string> names(csv.header().begin() + static_cast<std::ptrdiff_t>(fixed.size()),
                                   csv.header().end());
    CountingProcessData data(names);
    std::vector<std::string> f;
    std::vector<double> x(names.size());
    while (csv.next(f)) {
        const auto subject = csv.integer(f, 0);
        const auto cluster = csv.integer(f, 1);
        const double start = csv.real(f, 2);
        const double stop = csv.real(f, 3);
        if (!(stop > start)) csv.fail(3, f[3], "stop must exceed start");
        const int status = csv.flag(f, 4);
        const auto stratum = csv.integer(f, 5);
        if (stratum < std::numeric_limits<int>::min() || stratum > std::numeric_limits<int>::max()) {
            csv.fail(5, f[5], "stratum out of range");
        }
        for (std::size_t j = 0; j < names.size(); ++j) x[j] = csv.real(f, fixed.size() + j);
        data.add(subject, cluster, start, stop, status, x, static_cast<int>(stratum));
    }
    return data;
}

CountingProcessData read_counting_process(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_counting_process(in, path.string());
}

// ---- results -------------------------------------------------------------

ResultFormat parse_result_format(std::string_view s) {
    if (s == "csv") return ResultFormat::Csv;
    if (s == "text") return ResultFormat::Text;
    throw ConfigError("unknown result format '" + std::string(s) + "' (expected csv or text)");
}

std::string format_hr(double hr, double ci_low, double ci_high) {
    return fmt::format("{:.2f} ({:.2f}-{:.2f})", hr, ci_low, ci_high);
}

namespace {

const std::vector<std::string> kResultColumns{"method",     "estimand",          "hr",
                                              "ci_low",     "ci_high",           "se_log_hr",
                                              "n_subjects", "n_events",          "robust_se",
                                              "pct_bias_unadjusted", "pct_bias_eliminated", "error"};

void write_results_csv(const ResultTable& table, std::ostream& out) {
    for (std::size_t j = 0; j < kResultColumns.size(); ++j) out << (j ? "," : "") << kResultColumns[j];
    out << '\n';
    for (const auto& row : table.rows) {
        out << to_string(row.method) << ',' << to_string(row.estimand) << ',';
        if (row.result) {
            const auto& r = *row.result;
            out << format_real(r.hr) << ',' << format_real(r.ci_low) << ',' << format_real(r.ci_high) << ','
                << format_real(r.se_log_hr) << ',' << r.n_subjects << ',' << r.n_events << ','
                << (r.robust_se_used ? 1 : 0) << ',';
        } else {
            out << ",,,,,,,";
        }
        out << (row.bias ? optional_real(row.bias->percent_bias_unadjusted) : "") << ','
            << (row.bias ? optional_real(row.bias->percent_bias_eliminated) : "") << ',' << quote(row.error) << '\n';
    }
}

std::string table_line(std::string_view a, std::string_view b, std::string_view c, std::string_view d) {
    auto s = fmt::format("{:<40}{:<10}{:<24}{:>18}", a, b, c, d);
    s.erase(s.find_last_not_of(' ') + 1);
    return s + '\n';
}

void write_results_text(const ResultTable& table, std::ostream& out) {
    out << table_line("Effect estimate", "Estimand", "Hazard ratio (95%CI)", "Bias eliminated");
    out << std::string(92, '-') << '\n';
    std::optional<double> unadjusted_bias;
    for (const auto& row : table.rows) {
        std::string hr;
        std::string eliminated;
        if (row.result) {
            hr = format_hr(row.result->hr, row.result->ci_low, row.result->ci_high);
        } else {
            hr = "failed";
        }
        if (row.bias) {
            if (row.bias->percent_bias_eliminated && row.method != Method::Unadjusted) {
                eliminated = fmt::format("{:.1f}%", *row.bias->percent_bias_eliminated);
            } else if (row.bias->percent_bias_eliminated) {
                eliminated = "-";
            } else {
                eliminated = "undefined";
            }
            if (row.method == Method::Unadjusted) unadjusted_bias = row.bias->percent_bias_unadjusted;
        }
        out << table_line(describe(row.method), to_string(row.estimand), hr, eliminated);
    }
    const auto* unadjusted = table.find(Method::Unadjusted);
    if (unadjusted && unadjusted->bias) {
        out << '\n'
            << (unadjusted_bias ? fmt::format("Unadjusted bias: {:.1f}% of the true log hazard ratio\n", *unadjusted_bias)
                                : std::string("Unadjusted bias: undefined (true hazard ratio is 1)\n"));
    }
    bool notes = false;
    for (const auto& row : table.rows) {
        if (row.error.empty()) continue;
        if (!notes) out << "\nNotes:\n";
        notes = true;
        out << "  " << to_string(row.method) << ": " << row.error << '\n';
    }
    for (const auto& w : table.warnings) {
        if (!notes) out << "\nNotes:\n";
        notes = true;
        out << "  " << w << '\n';
    }
}

}  // namespace

void write_results(const ResultTable& table, std::ostream& out, ResultFormat format) {
    if (format == ResultFormat::Csv) {
        write_results_csv(table, out);
    } else {
        write_results_text(table, out);
    }
}

void write_results(const ResultTable& table, const std::filesystem::path& path, ResultFormat format) {
    auto out = open_out(path);
    write_results(table, out, format);
    finish(out, path);
}

ResultTable read_results(std::istream& in, std::string_view source) {
    CsvReader csv(in, source);
    std::vector<std::size_t> col;
    for (const auto& name : kResultColumns) col.push_back(csv.require(name));
    ResultTable table;
    std::vector<std::string> f;
    while (csv.next(f)) {
        ResultRow row;
        try {
            row.method = parse_method(f[col[0]]);
        } catch (const DataError&) {
            csv.fail(col[0], f[col[0]], "unknown method");
        }
        try {
            row.estimand = parse_estimand(f[col[1]]);
        } catch (const DataError&) {
            csv.fail(col[1], f[col[1]], "expected ATC, ATT or ATE");
        }
        row.error = f[col[11]];
        if (row.error.empty()) {
            EstimatorResult r;
            r.method = row.method;
            r.estimand = row.estimand;
            r.hr = csv.real(f, col[2]);
            if (!(r.hr > 0.0)) csv.fail(col[2], f[col[2]], "hazard ratio must be positive");
            r.ci_low = csv.optional_real(f, col[3]).value_or(r.hr);
            r.ci_high = csv.optional_real(f, col[4]).value_or(r.hr);
            r.se_log_hr = csv.optional_real(f, col[5]).value_or(0.0);
            if (!f[col[6]].empty()) r.n_subjects = static_cast<std::size_t>(csv.integer(f, col[6]));
            if (!f[col[7]].empty()) r.n_events = static_cast<std::size_t>(csv.integer(f, col[7]));
            if (!f[col[8]].empty()) r.robust_se_used = csv.flag(f, col[8]) == 1;
            row.result = std::move(r);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

ResultTable read_results(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_results(in, path.string());
}

// ---- metadata ------------------------------------------------------------

std::filesystem::path metadata_path(const std::filesystem::path& output) {
    auto p = output;
    p += ".meta.json";
    return p;
}

std::filesystem::path write_metadata(const std::filesystem::path& output, const nlohmann::json& meta) {
    const auto path = metadata_path(output);
    auto out = open_out(path);
    out << meta.dump(2) << '\n';
    finish(out, path);
    return path;
}

}  // namespace survbias::cohortio
