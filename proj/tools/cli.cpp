#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "json.hpp"
#include "survbias/cohortio/cohortio.hpp"
#include "survbias/datagen/simulation.hpp"
#include "survbias/error.hpp"
#include "survbias/estimators/estimators.hpp"
#include "survbias/kernels/execution.hpp"
#include "survbias/version.hpp"

namespace survbias::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// FNV-1a over the canonical config text; stable across runs and platforms.
std::string config_hash(const json& config) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : config.dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return fmt::format("fnv1a64:{:016x}", h);
}

json base_metadata(std::string_view command, const json& config) {
    json meta;
    meta["tool"] = "survbias";
    meta["version"] = std::string(kVersion);
    meta["command"] = std::string(command);
    meta["config"] = config;
    meta["config_hash"] = config_hash(config);
    return meta;
}

struct SimulationArgs {
    std::string scenario = "beta";
    SimulationConfig config;
    std::optional<double> calibrate_target;
    double calibrate_tolerance = 0.002;

    SimulationConfig resolve() {
        config.scenario = parse_scenario(scenario);
        config.validate();
        return config;
    }
};

void add_simulation_options(CLI::App* app, SimulationArgs& a) {
    auto& c = a.config;
    app->add_option("--scenario", a.scenario, "Heterogeneity mechanism: beta or gfactor")->capture_default_str();
    app->add_option("--n", c.n_per_cohort, "Subjects per cohort")->capture_default_str();
    app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    app->add_option("--wait-rate", c.wait_rate, "Rate of the exponential wait time")->capture_default_str();
    app->add_option("--beta-a", c.beta_a, "Beta shape a (beta scenario)")->capture_default_str();
    app->add_option("--beta-b", c.beta_b, "Beta shape b (beta scenario)")->capture_default_str();
    app->add_option("--base-rate", c.base_rate, "Rate without G (gfactor scenario)")->capture_default_str();
    app->add_option("--p-g", c.p_g, "Proportion carrying G (gfactor scenario)")->capture_default_str();
    app->add_option("--g-multiplier", c.g_multiplier, "Rate multiplier for G carriers; 1 removes heterogeneity")
        ->capture_default_str();
    app->add_option("--conditional-hr", c.conditional_hr, "Treatment hazard ratio given frailty")->capture_default_str();
    app->add_option("--censoring-horizon", c.censoring_horizon, "Maximum follow-up on each record's clock");
    app->add_option("--calibrate-target", a.calibrate_target,
                    "Calibrate conditional-hr so the true marginal ATE hazard ratio hits this value first");
    app->add_option("--calibrate-tolerance", a.calibrate_tolerance, "Calibration tolerance")->capture_default_str();
}

json config_json(const SimulationConfig& c) {
    json j;
    j["scenario"] = std::string(to_string(c.scenario));
    j["n"] = c.n_per_cohort;
    j["seed"] = c.seed;
    j["wait_rate"] = c.wait_rate;
    if (c.scenario == Scenario::BetaHeterogeneity) {
        j["beta_a"] = c.beta_a;
        j["beta_b"] = c.beta_b;
    } else {
        j["base_rate"] = c.base_rate;
        j["p_g"] = c.p_g;
        j["g_multiplier"] = c.g_multiplier;
    }
    j["conditional_hr"] = c.conditional_hr;
    j["censoring_horizon"] = c.censoring_horizon ? json(*c.censoring_horizon) : json(nullptr);
    return j;
}

json calibration_json(const CalibrationResult& r, double target) {
    json j;
    j["target"] = target;
    j["conditional_hr"] = r.conditional_hr;
    j["marginal_hr"] = r.marginal_hr;
    j["converged"] = r.converged;
    j["trace"] = json::array();
    for (const auto& s : r.trace) j["trace"].push_back({{"conditional_hr", s.conditional_hr}, {"marginal_hr", s.marginal_hr}});
    j["warnings"] = r.warnings;
    return j;
}

// Calibrates in place when a target was requested; returns the metadata block.
std::optional<json> maybe_calibrate(SimulationArgs& a, SimulationConfig& config, std::ostream& err) {
    if (!a.calibrate_target) return std::nullopt;
    CalibrationOptions options;
    options.tolerance = a.calibrate_tolerance;
    const auto r = calibrate_conditional_hr(config, *a.calibrate_target, options);
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    config.conditional_hr = r.conditional_hr;
    return calibration_json(r, *a.calibrate_target);
}

struct EstimationArgs {
    std::string landmark_preset = "simulation";
    std::vector<double> landmark_times;
    std::optional<double> landmark_window;
    std::string wait_coding = "treated-only";
    EstimationSettings settings;
    std::optional<double> truth_atc;
    std::optional<double> truth_att;
    std::optional<double> truth_ate;

    EstimationSettings resolve() {
        auto s = settings;
        s.landmarks = LandmarkSpec::preset(landmark_preset);
        if (!landmark_times.empty()) s.landmarks.times = landmark_times;
        if (landmark_window) s.landmarks.window = *landmark_window;
        if (wait_coding == "treated-only") {
            s.wait_coding = WaitCoding::TreatedOnly;
        } else if (wait_coding == "shared") {
            s.wait_coding = WaitCoding::Shared;
        } else {
            throw ConfigError("unknown wait coding '" + wait_coding + "' (expected treated-only or shared)");
        }
        s.validate();
        return s;
    }

    TruthValues truth() const { return {truth_atc, truth_att, truth_ate}; }
};

void add_truth_options(CLI::App* app, EstimationArgs& a) {
    app->add_option("--truth-atc", a.truth_atc, "Known true ATC hazard ratio for bias columns");
    app->add_option("--truth-att", a.truth_att, "Known true ATT hazard ratio for bias columns");
    app->add_option("--truth-ate", a.truth_ate, "Known true ATE hazard ratio for bias columns");
}

void add_estimation_options(CLI::App* app, EstimationArgs& a) {
    auto& s = a.settings;
    app->add_option("--landmarks", a.landmark_preset, "Landmark preset: simulation ({0..20}, window 1) or "
                                                      "application ({0,2,..,16}, window 2)")
        ->capture_default_str();
    app->add_option("--landmark-times", a.landmark_times, "Explicit landmark times (overrides the preset)");
    app->add_option("--landmark-window", a.landmark_window, "Landmark window (overrides the preset)");
    app->add_option("--rcs-knots", s.rcs_knots, "Knots of the wait-time spline (3-7)")->capture_default_str();
    app->add_option("--early-w-max", s.early_w_max, "Largest wait counted as an early start")->capture_default_str();
    app->add_option("--level", s.level, "Confidence level")->capture_default_str();
    app->add_flag("--robust,!--no-robust", s.robust_variance, "Sandwich variance clustered on subject id")
        ->capture_default_str();
    app->add_option("--confounders", s.confounders, "Covariate columns (without prefix) to adjust for");
    app->add_option("--wait-coding", a.wait_coding, "Wait-time columns for controls: treated-only or shared")
        ->capture_default_str();
    add_truth_options(app, a);
}

json settings_json(const EstimationSettings& s) {
    json j;
    j["landmark_times"] = s.landmarks.times;
    j["landmark_window"] = s.landmarks.window;
    j["rcs_knots"] = s.rcs_knots;
    j["early_w_max"] = s.early_w_max;
    j["level"] = s.level;
    j["robust"] = s.robust_variance;
    j["confounders"] = s.confounders;
    j["wait_coding"] = s.wait_coding == WaitCoding::Shared ? "shared" : "treated-only";
    return j;
}

json truth_json(const TruthValues& t) {
    json j = json::object();
    if (t.atc) j["atc"] = *t.atc;
    if (t.att) j["att"] = *t.att;
    if (t.ate) j["ate"] = *t.ate;
    return j;
}

void write_table(const ResultTable& table, const std::optional<fs::path>& path, cohortio::ResultFormat format,
                 const json& meta, std::ostream& out) {
    if (path) {
        cohortio::write_results(table, *path, format);
        cohortio::write_metadata(*path, meta);
    } else {
        cohortio::write_results(table, out, format);
    }
}

json table_warnings(const ResultTable& table) {
    json w = table.warnings;
    for (const auto& row : table.rows) {
        if (!row.error.empty()) w.push_back(std::string(to_string(row.method)) + " failed: " + row.error);
    }
    return w;
}

CohortData concatenate(const std::vector<std::string>& paths) {
    CohortData all;
    for (std::size_t k = 0; k < paths.size(); ++k) {
        auto d = cohortio::read_cohort(fs::path(paths[k]), {.latent = true});
        if (k == 0) {
            all.covariate_names = d.covariate_names;
        } else if (d.covariate_names != all.covariate_names) {
            throw DataError("'" + paths[k] + "' has different covariate columns than '" + paths[0] + "'");
        }
        for (auto& r : d.records) all.records.push_back(std::move(r));
    }
    return all;
}

// Truth rows from the latent columns of simulated two-cohort files.
std::optional<SimulatedCohorts> latent_cohorts(const CohortData& data) {
    SimulatedCohorts c;
    for (const auto& r : data.records) {
        if (r.cohort == Cohort::Prospective || !r.latent_untreated_time || !r.latent_treated_time) return std::nullopt;
        (r.cohort == Cohort::Control ? c.control : c.treated).records.push_back(r);
    }
    if (c.control.records.empty() || c.treated.records.empty()) return std::nullopt;
    return c;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Survivorship-bias simulation and estimation toolkit"};
    app.name("survbias");
    app.set_version_flag("--version", std::string(kVersion));
    app.set_config("--config", "", "TOML config file; sections are named after subcommands");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads for the parallel kernels (0 = runtime default); "
                                         "results do not depend on it");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate control and treated cohorts");
    SimulationArgs sim_args;
    std::string sim_dir = ".";
    bool sim_prospective = false;
    bool sim_latent = true;
    add_simulation_options(sim, sim_args);
    sim->add_option("--out-dir", sim_dir, "Output directory")->capture_default_str();
    sim->add_flag("--prospective", sim_prospective, "Also write a prospective cohort followed from diagnosis");
    sim->add_flag("--latent,!--no-latent", sim_latent, "Write latent columns (needed for truth from files)")
        ->capture_default_str();

    // truth
    auto* truth = app.add_subcommand("truth", "True marginal hazard ratios from counterfactual clone cohorts");
    SimulationArgs truth_args;
    std::optional<std::string> truth_out;
    std::string truth_format = "text";
    add_simulation_options(truth, truth_args);
    truth->add_option("--output", truth_out, "Result file (stdout when omitted)");
    truth->add_option("--format", truth_format, "csv or text")->capture_default_str();

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Find the conditional hazard ratio giving a target marginal ATE");
    SimulationArgs cal_args;
    double cal_target = 1.5;
    CalibrationOptions cal_options;
    std::optional<std::string> cal_out;
    add_simulation_options(cal, cal_args);
    cal->add_option("--target", cal_target, "Target marginal ATE hazard ratio")->capture_default_str();
    cal->add_option("--tolerance", cal_options.tolerance, "Accepted distance from the target")->capture_default_str();
    cal->add_option("--lower", cal_options.lower, "Lower end of the bracket")->capture_default_str();
    cal->add_option("--upper", cal_options.upper, "Upper end of the bracket")->capture_default_str();
    cal->add_option("--output", cal_out, "JSON file for the result and trace (stdout summary always)");

    // estimate
    auto* est = app.add_subcommand("estimate", "Run every estimator on cohort files");
    EstimationArgs est_args;
    std::vector<std::string> est_inputs;
    std::optional<std::string> est_out;
    std::string est_format = "csv";
    std::optional<std::string> est_report;
    bool est_latent_truth = true;
    add_estimation_options(est, est_args);
    est->add_option("--input", est_inputs, "Cohort files (control and treated, or one prospective file)")->required();
    est->add_option("--output", est_out, "Result file (stdout when omitted)");
    est->add_option("--format", est_format, "csv or text")->capture_default_str();
    est->add_option("--report", est_report, "Also write the aligned text table here");
    est->add_flag("--latent-truth,!--no-latent-truth", est_latent_truth,
                  "Add truth rows from latent columns when the files have them")
        ->capture_default_str();

    // report
    auto* rep = app.add_subcommand("report", "Aligned summary with bias percentages from a results file");
    EstimationArgs rep_args;
    std::string rep_input;
    std::optional<std::string> rep_out;
    add_truth_options(rep, rep_args);
    rep->add_option("--input", rep_input, "Results CSV")->required();
    rep->add_option("--output", rep_out, "Text file (stdout when omitted)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        kernels::set_worker_count(threads);

        if (*sim) {
            auto config = sim_args.resolve();
            const auto calibration = maybe_calibrate(sim_args, config, err);
            const auto cohorts = simulate_cohorts(config);
            const fs::path dir(sim_dir);
            fs::create_directories(dir);
            json meta = base_metadata("simulate", config_json(config));
            meta["generator"] = std::string(kGeneratorName);
            meta["seed"] = config.seed;
            meta["acceptance_rate"] = cohorts.acceptance_rate;
            meta["treated_candidates"] = cohorts.candidates;
            meta["frailty_resamples"] = cohorts.frailty_resamples;
            if (calibration) meta["calibration"] = *calibration;
            meta["warnings"] = json::array();
            std::vector<std::pair<fs::path, const CohortData*>> files{{dir / "control.csv", &cohorts.control},
                                                                      {dir / "treated.csv", &cohorts.treated}};
            std::optional<SimulatedProspective> prospective;
            if (sim_prospective) {
                prospective = simulate_prospective(config);
                meta["prospective_frailty_resamples"] = prospective->frailty_resamples;
                files.emplace_back(dir / "prospective.csv", &prospective->cohort);
            }
            meta["outputs"] = json::array();
            for (const auto& [path, data] : files) meta["outputs"].push_back(path.filename().string());
            for (const auto& [path, data] : files) {
                cohortio::write_cohort(*data, path, {.latent = sim_latent});
                cohortio::write_metadata(path, meta);
                out << "wrote " << path.string() << " (" << data->records.size() << " records)\n";
            }
            out << fmt::format("treated acceptance rate {:.4f}\n", cohorts.acceptance_rate);
            return 0;
        }

        if (*truth) {
            auto config = truth_args.resolve();
            const auto format = cohortio::parse_result_format(truth_format);
            const auto calibration = maybe_calibrate(truth_args, config, err);
            const auto cohorts = simulate_cohorts(config);
            ResultTable table;
            for (Estimand e : {Estimand::ATC, Estimand::ATT, Estimand::ATE}) {
                ResultRow row;
                row.method = Method::Truth;
                row.estimand = e;
                row.result = true_marginal_hr(cohorts, e, config.censoring_horizon);
                table.rows.push_back(std::move(row));
            }
            json meta = base_metadata("truth", config_json(config));
            meta["generator"] = std::string(kGeneratorName);
            meta["seed"] = config.seed;
            meta["acceptance_rate"] = cohorts.acceptance_rate;
            if (calibration) meta["calibration"] = *calibration;
            meta["warnings"] = json::array();
            write_table(table, truth_out ? std::optional<fs::path>(*truth_out) : std::nullopt, format, meta, out);
            return 0;
        }

        if (*cal) {
            const auto config = cal_args.resolve();
            const auto r = calibrate_conditional_hr(config, cal_target, cal_options);
            for (const auto& w : r.warnings) err << "warning: " << w << '\n';
            for (const auto& s : r.trace) out << fmt::format("conditional_hr {:.6f} -> marginal {:.6f}\n", s.conditional_hr, s.marginal_hr);
            out << fmt::format("calibrated conditional_hr {:.6f} (marginal ATE {:.6f}{})\n", r.conditional_hr,
                               r.marginal_hr, r.converged ? "" : ", tolerance not reached");
            if (cal_out) {
                json echo = config_json(config);
                echo["target"] = cal_target;
                echo["tolerance"] = cal_options.tolerance;
                echo["lower"] = cal_options.lower;
                echo["upper"] = cal_options.upper;
                json meta = base_metadata("calibrate", echo);
                meta["generator"] = std::string(kGeneratorName);
                meta["seed"] = config.seed;
                meta["warnings"] = r.warnings;
                const fs::path path(*cal_out);
                std::ofstream f(path, std::ios::binary);
                if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
                f << calibration_json(r, cal_target).dump(2) << '\n';
                if (!f) throw DataError("write to '" + path.string() + "' failed");
                f.close();
                cohortio::write_metadata(path, meta);
            }
            return r.converged ? 0 : 3;
        }

        if (*est) {
            const auto settings = est_args.resolve();
            const auto format = cohortio::parse_result_format(est_format);
            const auto data = concatenate(est_inputs);
            ResultTable table;
            if (auto latent = est_latent_truth ? latent_cohorts(data) : std::nullopt) {
                for (Estimand e : {Estimand::ATC, Estimand::ATT, Estimand::ATE}) {
                    ResultRow row;
                    row.method = Method::Truth;
                    row.estimand = e;
                    try {
                        row.result = true_marginal_hr(*latent, e);
                    } catch (const std::exception& ex) {
                        row.error = ex.what();
                    }
                    table.rows.push_back(std::move(row));
                }
            }
            auto rest = run_all(data, settings, est_args.truth());
            for (auto& r : rest.rows) table.rows.push_back(std::move(r));
            table.warnings = std::move(rest.warnings);
            attach_bias(table, est_args.truth());

            json echo;
            echo["settings"] = settings_json(settings);
            echo["truth"] = truth_json(est_args.truth());
            echo["latent_truth"] = est_latent_truth;
            json inputs = json::array();
            for (const auto& p : est_inputs) inputs.push_back(fs::path(p).filename().string());
            echo["inputs"] = inputs;
            json meta = base_metadata("estimate", echo);
            meta["warnings"] = table_warnings(table);
            write_table(table, est_out ? std::optional<fs::path>(*est_out) : std::nullopt, format, meta, out);
            if (est_report) {
                cohortio::write_results(table, fs::path(*est_report), cohortio::ResultFormat::Text);
                cohortio::write_metadata(fs::path(*est_report), meta);
            }
            for (const auto& row : table.rows) {
                if (!row.error.empty()) err << "warning: " << to_string(row.method) << ": " << row.error << '\n';
            }
            return 0;
        }

        if (*rep) {
            auto table = cohortio::read_results(fs::path(rep_input));
            if (table.rows.empty()) {
                err << "warning: '" << rep_input << "' has no result rows\n";
                table.warnings.push_back("no result rows in input");
            }
            attach_bias(table, rep_args.truth());
            json echo;
            echo["input"] = fs::path(rep_input).filename().string();
            echo["truth"] = truth_json(rep_args.truth());
            json meta = base_metadata("report", echo);
            meta["warnings"] = table.warnings;
            write_table(table, rep_out ? std::optional<fs::path>(*rep_out) : std::nullopt,
                        cohortio::ResultFormat::Text, meta, out);
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace survbias::cli
