#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = survbias::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("survbias_test_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(cli({}).code == 1);
    CHECK(cli({"--help"}).code == 0);
    CHECK(cli({"simulate", "--scenario", "weibull"}).code == 1);
    CHECK(cli({"simulate", "--n", "0"}).code == 1);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({"estimate"}).code == 1);
}

TEST_CASE("missing input is a data error") {
    TempDir dir("missing");
    CHECK(cli({"estimate", "--input", dir / "nope.csv"}).code == 2);
}

TEST_CASE("simulate is reproducible and independent of thread count") {
    TempDir dir("simulate");
    const std::vector<std::string> base{"simulate", "--n", "3000", "--seed", "42", "--conditional-hr", "1.7",
                                        "--prospective"};
    auto a = base;
    a.insert(a.end(), {"--out-dir", dir / "a"});
    auto b = base;
    b.insert(b.end(), {"--out-dir", dir / "b"});
    b.insert(b.begin(), {"--threads", "3"});
    REQUIRE(cli(a).code == 0);
    REQUIRE(cli(b).code == 0);
    for (const char* f : {"control.csv", "treated.csv", "prospective.csv", "control.csv.meta.json"}) {
        const auto x = slurp(dir.path / "a" / f);
        CHECK_FALSE(x.empty());
        CHECK(x == slurp(dir.path / "b" / f));
    }
    const auto meta = slurp(dir.path / "a" / "treated.csv.meta.json");
    CHECK(contains(meta, "\"seed\": 42"));
    CHECK(contains(meta, "mt19937_64"));
    CHECK(contains(meta, "\"version\""));

    SUBCASE("estimate on the files") {
        const auto est = [&](const std::string& tag, const std::string& threads) {
            return cli({"--threads", threads, "estimate", "--input", dir / "a/control.csv", "--input",
                        dir / "a/treated.csv", "--latent-truth", "--output", dir / ("res_" + tag + ".csv"), "--report",
                        dir / ("res_" + tag + ".txt")});
        };
        REQUIRE(est("1", "1").code == 0);
        REQUIRE(est("3", "3").code == 0);
        CHECK(slurp(dir.path / "res_1.csv") == slurp(dir.path / "res_3.csv"));
        CHECK(slurp(dir.path / "res_1.txt") == slurp(dir.path / "res_3.txt"));
        const auto csv = slurp(dir.path / "res_1.csv");
        CHECK(contains(csv, "truth,ATC"));
        CHECK(contains(csv, "left_truncation,ATE"));

        REQUIRE(cli({"estimate", "--input", dir / "a/prospective.csv", "--output", dir / "p.csv"}).code == 0);
        CHECK(contains(slurp(dir.path / "p.csv"), "time_varying,ATE"));
    }
}

TEST_CASE("config file values yield to flags") {
    TempDir dir("config");
    {
        std::ofstream cfg(dir / "run.toml");
        cfg << "[simulate]\nn = 500\nseed = 7\n";
    }
    REQUIRE(cli({"--config", dir / "run.toml", "simulate", "--seed", "8", "--out-dir", dir / "out"}).code == 0);
    const auto meta = slurp(dir.path / "out" / "control.csv.meta.json");
    CHECK(contains(meta, "\"seed\": 8"));
    CHECK(contains(meta, "\"n\": 500"));

    {
        std::ofstream cfg(dir / "both.toml");
        cfg << "[simulate]\nn = 400\n\n[estimate]\nrcs-knots = 3\n";
    }
    // A section only supplies values; it never runs its subcommand.
    REQUIRE(cli({"--config", dir / "both.toml", "simulate", "--out-dir", dir / "both"}).code == 0);
    REQUIRE(cli({"--config", dir / "both.toml", "estimate", "--input", dir / "both/control.csv", "--input",
                 dir / "both/treated.csv", "--output", dir / "both/res.csv"})
                .code == 0);
    CHECK(contains(slurp(dir.path / "both" / "res.csv.meta.json"), "\"rcs_knots\": 3"));
    CHECK(contains(slurp(dir.path / "both" / "control.csv.meta.json"), "\"n\": 400"));

    {
        std::ofstream cfg(dir / "bad.toml");
        cfg << "[simulate]\ncolour = 3\n";
    }
    CHECK(cli({"--config", dir / "bad.toml", "simulate", "--out-dir", dir / "out2"}).code == 1);
}

TEST_CASE("rcs without wait_time is a schema error") {
    TempDir dir("schema");
    {
        std::ofstream f(dir / "control.csv");
        f << "id,cohort,entry_time,event_time,event,treatment_start\n1,control,0,2.5,1,\n";
        std::ofstream g(dir / "treated.csv");
        g << "id,cohort,entry_time,event_time,event,treatment_start\n2,treated,1.5,2.5,1,\n";
    }
    const auto r = cli({"estimate", "--input", dir / "control.csv", "--input", dir / "treated.csv"});
    CHECK(r.code == 2);
    CHECK(contains(r.err, "wait_time"));
    CHECK(contains(r.err, "line 2"));
    CHECK(contains(r.err, "treated.csv"));
}

TEST_CASE("report reproduces the bias arithmetic of a published table") {
    TempDir dir("report");
    {
        std::ofstream f(dir / "results.csv");
        f << "method,estimand,hr,ci_low,ci_high,se_log_hr,n_subjects,n_events,robust_se,pct_bias_unadjusted,"
             "pct_bias_eliminated,error\n"
             "unadjusted,ATE,1.63,1.57,1.69,,,,,,,\n"
             "wait_quadratic,ATE,2.11,2.03,2.19,,,,,,,\n"
             "time_varying,ATE,2.15,2.07,2.23,,,,,,,\n";
    }
    const auto r = cli({"report", "--input", dir / "results.csv"});
    REQUIRE(r.code == 0);
    CHECK(contains(r.out, "93.2%"));
    CHECK(contains(r.out, "Unadjusted bias: 36.2%"));

    const auto same = cli({"report", "--input", dir / "results.csv", "--truth-ate", "1.63"});
    REQUIRE(same.code == 0);
    CHECK(contains(same.out, "undefined"));

    {
        std::ofstream f(dir / "empty.csv");
        f << "method,estimand,hr,ci_low,ci_high,se_log_hr,n_subjects,n_events,robust_se,pct_bias_unadjusted,"
             "pct_bias_eliminated,error\n";
    }
    const auto empty = cli({"report", "--input", dir / "empty.csv"});
    CHECK(empty.code == 0);
    CHECK(contains(empty.out, "Effect estimate"));
    CHECK(contains(empty.err, "warning"));
}

TEST_CASE("truth and calibrate") {
    TempDir dir("truth");
    const auto t = cli({"truth", "--scenario", "gfactor", "--g-multiplier", "1", "--n", "20000",
                        "--conditional-hr", "1.5", "--format", "csv", "--output", dir / "truth.csv"});
    REQUIRE(t.code == 0);
    CHECK(contains(slurp(dir.path / "truth.csv"), "truth,ATE"));

    const auto c = cli({"calibrate", "--n", "2000", "--target", "1.5", "--tolerance", "0.02", "--output",
                        dir / "cal.json"});
    CHECK(c.code == 0);
    CHECK(contains(slurp(dir.path / "cal.json"), "conditional_hr"));

    const auto stuck = cli({"calibrate", "--n", "2000", "--target", "1.5", "--tolerance", "1e-12"});
    CHECK(stuck.code == 3);
}
