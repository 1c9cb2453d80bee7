#include "penhaz/errors.hpp"
#include "penhaz/report_io.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace penhaz;

namespace {

SurvivalDataset parse(const std::string& text) {
    std::istringstream in(text);
    return read_dataset_csv(in);
}

int error_line(const std::string& text) {
    try {
        parse(text);
    } catch (const ParseError& e) {
        return e.line();
    }
    return -1;
}

}  // namespace

TEST_SUITE("report_io") {

TEST_CASE("parses time,event with optional covariates") {
    const auto d = parse("time,event\n1.5,1\n2,0\n\n3e1,1\n");
    CHECK(d.size() == 3);
    CHECK(d.time[2] == 30.0);
    CHECK(d.event == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(d.n_covariates() == 0);

    const auto x = parse("time,event,age,dose\r\n4,1,0.5,-2\r\n5,0,1.5,3\r\n");
    CHECK(x.n_covariates() == 2);
    CHECK(x.covariates(1, 1) == 3.0);
    CHECK(x.covariates(0, 0) == 0.5);
}

TEST_CASE("malformed rows name their line") {
    const std::string text = "time,event\n1,1\n2,2\n";
    CHECK(error_line(text) == 3);
    try {
        parse(text);
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        CHECK(std::string(e.what()).find("'2'") != std::string::npos);
    }
    CHECK(error_line("time,event\n1,1\n-2,1\n") == 3);
    CHECK(error_line("time,event\n0,1\n") == 2);
    CHECK(error_line("time,event\nabc,1\n") == 2);
    CHECK(error_line("time,event\n1,1,7\n") == 2);
    CHECK(error_line("time,event,x\n1,1,y\n") == 2);
    CHECK(error_line("event,time\n1,1\n") == 1);
    CHECK(error_line("time,event\n") > 0);
    CHECK(error_line("") == 1);
}

TEST_CASE("missing files are reported") {
    CHECK_THROWS_AS(read_dataset_csv(std::string("/nonexistent/data.csv")), std::runtime_error);
}

TEST_CASE("dataset CSV round trips exactly") {
    const SurvivalDataset d({0.1, 1.0 / 3.0, 97.123456789012345}, {1, 0, 1},
                            (Eigen::MatrixXd(3, 1) << 0.2, -1e-300, 5.0).finished());
    std::ostringstream out;
    write_dataset_csv(out, d);
    const auto back = parse(out.str());
    CHECK(back.time == d.time);
    CHECK(back.event == d.event);
    CHECK(back.covariates == d.covariates);
}

TEST_CASE("format_double keeps 17 significant digits") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5}) CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("JSON writes non-finite numbers as null") {
    Eigen::MatrixXd m(1, 2);
    m << 1.0, std::numeric_limits<double>::quiet_NaN();
    const auto j = to_json(m);
    CHECK(j[0][0] == 1.0);
    CHECK(j[0][1].is_null());
}

TEST_CASE("coverage CSV lists survival then hazard rows") {
    CoverageReport r;
    r.kind = "coverage";
    r.scenario.n = 100;
    EstimatorCoverage e;
    e.method = VarianceMethod::Bayes;
    e.survival_coverage = 0.9;
    e.hazard_coverage = 0.8;
    r.estimators = {e};
    std::ostringstream out;
    write_coverage_csv(out, r);
    std::istringstream in(out.str());
    std::string header, row1, row2;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    CHECK(header == "target,estimator,n,coverage,coverage_se,mean_width,replicas_used,failures");
    CHECK(row1.rfind("survival,bayes,100,0.90000000000000002,", 0) == 0);
    CHECK(row2.rfind("hazard,bayes,100,0.80000000000000004,", 0) == 0);
}

TEST_CASE("scenario JSON echoes the configuration") {
    Scenario s;
    s.betas = {1.0};
    s.covariate_dists = {{0.0, 3.0}};
    const auto j = to_json(s);
    CHECK(j["shape"] == 13.0);
    CHECK(j["n"] == 100);
    CHECK(j["seed"] == 42);
    CHECK(j["estimators"].size() == 3);
    CHECK(j["covariate_ranges"][0][1] == 3.0);
}

}
