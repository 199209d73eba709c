#include <sstream>
#include <string>

#include <doctest.h>

#include "survbias/cohortio/cohortio.hpp"
#include "survbias/datagen/simulation.hpp"
#include "survbias/error.hpp"

using namespace survbias;
namespace io = survbias::cohortio;

namespace {

std::string error_of(const std::string& csv) {
    std::istringstream in(csv);
    try {
        io::read_cohort(in, {}, "cohort.csv");
    } catch (const DataError& e) {
        return e.what();
    }
    return {};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("cohort round trip is exact, latent columns included") {
    SimulationConfig c;
    c.n_per_cohort = 500;
    c.conditional_hr = 1.7;
    auto s = simulate_cohorts(c);
    auto data = s.treated;
    data.covariate_names = {"age"};
    for (auto& r : data.records) r.covariates = {0.1 * static_cast<double>(r.id)};

    std::stringstream buf;
    io::write_cohort(data, buf, {.latent = true});
    const auto back = io::read_cohort(buf, {.latent = true});
    CHECK(back == data);

    std::stringstream plain;
    io::write_cohort(data, plain);
    const auto stripped = io::read_cohort(plain);
    CHECK(stripped.records.size() == data.records.size());
    CHECK_FALSE(stripped.records[0].frailty_rate);
    CHECK(stripped.records[0].event_time == data.records[0].event_time);

    std::stringstream again;
    io::write_cohort(data, again, {.latent = true});
    std::stringstream first;
    io::write_cohort(back, first, {.latent = true});
    CHECK(again.str() == first.str());
}

TEST_CASE("schema errors name the line and column") {
    const std::string header = "id,cohort,entry_time,event_time,event,wait_time,treatment_start\n";
    CHECK(error_of(header + "1,control,0,2.5,1,,\n") == "");

    const auto bad_event = error_of(header + "1,control,0,2.5,1,,\n2,control,0,3.0,2,,\n");
    CHECK(contains(bad_event, "line 3"));
    CHECK(contains(bad_event, "'event'"));
    CHECK(contains(bad_event, "'2'"));

    CHECK(contains(error_of("id,cohort,entry_time,event,wait_time,treatment_start\n"), "event_time"));
    CHECK(contains(error_of(header + "1,control,0,abc,1,,\n"), "'event_time'"));
    CHECK(contains(error_of(header + "1,control,0,2.5,1,,\n1,control,0,3.5,1,,\n"), "duplicate"));
    CHECK(contains(error_of(header + "1,sibling,0,2.5,1,,\n"), "'cohort'"));
    CHECK(contains(error_of(header + "1,control,0,2.5,1\n"), "line 2"));
    CHECK(contains(error_of(header + "1,control,0,-1,1,,\n"), "'event_time'"));
    CHECK_FALSE(error_of("id,cohort,entry_time,event_time,event,wait_time,treatment_start,colour\n").empty());
    // A control and a treated record may share an id.
    CHECK(error_of(header + "1,control,0,2.5,1,,\n1,treated,1,3.5,1,1,\n") == "");
}

TEST_CASE("counting-process round trip") {
    CountingProcessData d({"treated", "age"});
    d.add({1, 1, 0.0, 2.0, 1, {1.0, 50.0}, 0});
    d.add({2, 1, 0.5, 3.25, 0, {0.0, 61.5}, 1});
    std::stringstream buf;
    io::write_counting_process(d, buf);
    CHECK(io::read_counting_process(buf) == d);
}

TEST_CASE("hazard ratio formatting") {
    CHECK(io::format_hr(1.5512, 1.5461, 1.5563) == "1.55 (1.55-1.56)");
    CHECK(io::format_real(0.1) == "0.10000000000000001");
    CHECK_THROWS_AS(io::parse_result_format("xml"), ConfigError);
}

TEST_CASE("results round trip and header-only input") {
    ResultTable t;
    ResultRow ok;
    ok.method = Method::WaitQuadratic;
    ok.estimand = Estimand::ATE;
    EstimatorResult r;
    r.method = ok.method;
    r.hr = 2.11;
    r.ci_low = 1.9;
    r.ci_high = 2.3;
    r.se_log_hr = 0.05;
    r.n_subjects = 100;
    r.n_events = 80;
    r.robust_se_used = true;
    ok.result = r;
    ResultRow failed;
    failed.method = Method::Matching;
    failed.error = "matching: every landmark lacks treated or control subjects";
    t.rows = {ok, failed};

    std::stringstream buf;
    io::write_results(t, buf, io::ResultFormat::Csv);
    const auto back = io::read_results(buf);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[0].result->hr == 2.11);
    CHECK(back.rows[0].result->n_events == 80);
    CHECK(back.rows[0].result->robust_se_used);
    CHECK_FALSE(back.rows[1].result);
    CHECK(back.rows[1].error == failed.error);

    std::stringstream header;
    io::write_results(ResultTable{}, header, io::ResultFormat::Csv);
    CHECK(io::read_results(header).rows.empty());

    std::stringstream text;
    io::write_results(t, text, io::ResultFormat::Text);
    CHECK(contains(text.str(), "2.11 (1.90-2.30)"));
    CHECK(contains(text.str(), "Notes:"));
}
