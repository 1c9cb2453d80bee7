#include "penhaz/report_io.hpp"

#include "penhaz/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace penhaz {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    out.push_back(field);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ParseError("line " + std::to_string(line) + ": " + msg, line);
}

nlohmann::json number(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

SurvivalDataset read_dataset_csv(std::istream& in) {
    std::string line;
    int lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        header = split_csv_line(line);
        break;
    }
    if (header.empty()) fail(lineno == 0 ? 1 : lineno, "missing header row");
    if (header.size() < 2 || header[0] != "time" || header[1] != "event")
        fail(lineno, "header must start with 'time,event'");
    const auto p = static_cast<int>(header.size()) - 2;

    std::vector<double> time;
    std::vector<std::uint8_t> event;
    std::vector<double> cov;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            fail(lineno, "expected " + std::to_string(header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        double t = 0.0;
        if (!parse_number(fields[0], t) || !(t > 0.0)) fail(lineno, "time must be a positive number, got '" + fields[0] + "'");
        if (fields[1] != "0" && fields[1] != "1") fail(lineno, "event must be 0 or 1, got '" + fields[1] + "'");
        time.push_back(t);
        event.push_back(fields[1] == "1" ? 1 : 0);
        for (int j = 0; j < p; ++j) {
            double x = 0.0;
            if (!parse_number(fields[2 + j], x)) fail(lineno, "covariate '" + header[2 + j] + "' is not a number");
            cov.push_back(x);
        }
    }
    if (time.empty()) fail(lineno, "no data rows");
    const auto n = static_cast<Eigen::Index>(time.size());
    Eigen::MatrixXd x(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) x(i, j) = cov[static_cast<std::size_t>(i) * p + j];
    return SurvivalDataset(std::move(time), std::move(event), std::move(x));
}

SurvivalDataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_dataset_csv(in);
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_dataset_csv(std::ostream& out, const SurvivalDataset& data) {
    out << "time,event";
    for (int j = 0; j < data.n_covariates(); ++j) out << ",x" << (j + 1);
    out << '\n';
    for (int i = 0; i < data.size(); ++i) {
        out << format_double(data.time[i]) << ',' << int(data.event[i]);
        for (int j = 0; j < data.n_covariates(); ++j) out << ',' << format_double(data.covariates(i, j));
        out << '\n';
    }
}

nlohmann::json to_json(const Eigen::MatrixXd& m) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json to_json(const Scenario& s) {
    nlohmann::json j;
    j["shape"] = s.truth.shape;
    j["scale"] = s.truth.scale;
    j["n"] = s.n;
    j["censoring"] = s.censoring_prop;
    j["censoring_mode"] = std::string(to_string(s.censoring_mode));
    j["betas"] = s.betas;
    auto cov = nlohmann::json::array();
    for (const auto& r : s.covariate_dists) cov.push_back({r.lo, r.hi});
    j["covariate_ranges"] = cov;
    j["risk_multiplies"] = s.risk_multiplies;
    j["replicas"] = s.replicas;
    j["seed"] = s.seed;
    auto est = nlohmann::json::array();
    for (auto e : s.estimators) est.push_back(std::string(to_string(e)));
    j["estimators"] = est;
    j["ci_level"] = s.ci_level;
    j["grid_points"] = s.n_gridpoints;
    j["knots"] = s.n_knots;
    j["knot_placement"] = std::string(to_string(s.knot_placement));
    j["knots_count_includes_boundaries"] = true;
    j["kappa_lo"] = s.kappa_search.kappa_lo;
    j["kappa_hi"] = s.kappa_search.kappa_hi;
    j["kappa_grid_points"] = s.kappa_search.grid_points;
    j["kappa_refine_rel_width"] = s.kappa_search.refine_rel_width;
    return j;
}

nlohmann::json to_json(const CoverageReport& r) {
    nlohmann::json j;
    j["kind"] = r.kind;
    j["scenario"] = to_json(r.scenario);
    j["replicas_ok"] = r.replicas_ok;
    j["replica_failures"] = r.replica_failures;
    j["warning"] = r.warning;
    j["failure_messages"] = r.failure_messages;
    auto est = nlohmann::json::array();
    for (const auto& e : r.estimators) {
        est.push_back({{"estimator", std::string(to_string(e.method))},
                       {"survival_coverage", number(e.survival_coverage)},
                       {"survival_coverage_se", number(e.survival_coverage_se)},
                       {"survival_mean_width", number(e.survival_mean_width)},
                       {"hazard_coverage", number(e.hazard_coverage)},
                       {"hazard_coverage_se", number(e.hazard_coverage_se)},
                       {"hazard_mean_width", number(e.hazard_mean_width)},
                       {"replicas_used", e.replicas_used},
                       {"failures", e.failures}});
    }
    j["estimators"] = est;
    auto coef = nlohmann::json::array();
    for (const auto& c : r.coefficients) {
        coef.push_back({{"estimator", std::string(to_string(c.method))},
                        {"coefficient", c.index},
                        {"truth", c.truth},
                        {"mean_estimate", number(c.mean_estimate)},
                        {"empirical_sd", number(c.empirical_sd)},
                        {"mean_sd", number(c.mean_sd)},
                        {"mean_width", number(c.mean_width)},
                        {"coverage", number(c.coverage)},
                        {"replicas_used", c.replicas_used}});
    }
    j["coefficients"] = coef;
    auto kappas = nlohmann::json::array();
    for (double k : r.kappas) kappas.push_back(number(k));
    j["kappas"] = kappas;
    return j;
}

nlohmann::json to_json(const std::vector<KappaSequenceRow>& rows) {
    auto arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"n", r.n},
                       {"kappa_n", number(r.kappa)},
                       {"kappa_n_over_sqrt_n", number(r.kappa_over_sqrt_n)},
                       {"lambda_n", number(r.lambda)},
                       {"replica_kappas", r.replica_kappas},
                       {"failures", r.failures}});
    }
    return arr;
}

nlohmann::json to_json(const FitResult& fit) {
    nlohmann::json j;
    j["kappa"] = fit.kappa;
    std::vector<double> beta(fit.params.beta.data(), fit.params.beta.data() + fit.params.beta.size());
    const Eigen::VectorXd theta = fit.theta();
    std::vector<double> th(theta.data(), theta.data() + theta.size());
    j["beta"] = beta;
    j["theta"] = th;
    j["loglik"] = number(fit.loglik);
    j["pen_loglik"] = number(fit.pen_loglik);
    j["lcv_a"] = number(fit.lcv_a);
    j["edf"] = number(fit.edf);
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["grad_norm"] = number(fit.grad_norm);
    j["boundary"] = fit.boundary;
    return j;
}

void write_coverage_csv(std::ostream& out, const CoverageReport& r) {
    out << "target,estimator,n,coverage,coverage_se,mean_width,replicas_used,failures\n";
    for (const char* target : {"survival", "hazard"}) {
        const bool surv = std::string_view(target) == "survival";
        for (const auto& e : r.estimators) {
            out << target << ',' << to_string(e.method) << ',' << r.scenario.n << ','
                << format_double(surv ? e.survival_coverage : e.hazard_coverage) << ','
                << format_double(surv ? e.survival_coverage_se : e.hazard_coverage_se) << ','
                << format_double(surv ? e.survival_mean_width : e.hazard_mean_width) << ',' << e.replicas_used
                << ',' << e.failures << '\n';
        }
    }
}

void write_ph_csv(std::ostream& out, const CoverageReport& r) {
    out << "coefficient,estimator,truth,mean_estimate,empirical_sd,mean_sd,mean_width,coverage,replicas_used\n";
    for (const auto& c : r.coefficients) {
        out << "beta" << c.index << ',' << to_string(c.method) << ',' << format_double(c.truth) << ','
            << format_double(c.mean_estimate) << ',' << format_double(c.empirical_sd) << ','
            << format_double(c.mean_sd) << ',' << format_double(c.mean_width) << ',' << format_double(c.coverage)
            << ',' << c.replicas_used << '\n';
    }
}

void write_kappa_csv(std::ostream& out, const std::vector<KappaSequenceRow>& rows) {
    out << "n,kappa_n,kappa_n_over_sqrt_n,lambda_n,replicas_used,failures\n";
    for (const auto& r : rows) {
        out << r.n << ',' << format_double(r.kappa) << ',' << format_double(r.kappa_over_sqrt_n) << ','
            << format_double(r.lambda) << ',' << r.replica_kappas.size() << ',' << r.failures << '\n';
    }
}

void write_curves_csv(std::ostream& out, const CurveBand& hazard, const CurveBand& survival) {
    out << "t,hazard,hazard_lo,hazard_hi,survival,survival_lo,survival_hi\n";
    for (std::size_t i = 0; i < hazard.times.size(); ++i) {
        out << format_double(hazard.times[i]) << ',' << format_double(hazard.estimate[i]) << ','
            << format_double(hazard.lower[i]) << ',' << format_double(hazard.upper[i]) << ','
            << format_double(survival.estimate[i]) << ',' << format_double(survival.lower[i]) << ','
            << format_double(survival.upper[i]) << '\n';
    }
}

}  // namespace penhaz
