// penhaz: fit penalized spline hazard models and run the simulation studies.
//
//   penhaz fit --input data.csv [--kappa auto|<v>] [--variance bayes,sandwich]
//   penhaz simulate coverage --n 100 --replicas 1000 ...
//   penhaz simulate ph --beta 1,-1 --cov "u(0,1);u(0,3)" ...
//   penhaz kappa-seq --sizes 100,200,500,1000,2000
//
// Exit status: 0 success (warnings possible), 1 usage or parse error,
// 2 numerical failure.

#include "penhaz/errors.hpp"
#include "penhaz/estimator.hpp"
#include "penhaz/report_io.hpp"
#include "penhaz/sim_engine.hpp"
#include "penhaz/variance.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace penhaz;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SearchFlags {
    double kappa_lo = 1e-2;
    double kappa_hi = 1e8;
    int kappa_grid = 30;

    void add(CLI::App& app) {
        app.add_option("--kappa-lo", kappa_lo, "Lower end of the kappa search range")->capture_default_str();
        app.add_option("--kappa-hi", kappa_hi, "Upper end of the kappa search range")->capture_default_str();
        app.add_option("--kappa-grid", kappa_grid, "Log-spaced kappa grid points")->capture_default_str();
    }
    KappaSearchOptions options() const {
        if (!(kappa_lo > 0.0) || !(kappa_hi > kappa_lo)) throw UsageError("need 0 < kappa-lo < kappa-hi");
        if (kappa_grid < 3) throw UsageError("kappa-grid must be at least 3");
        KappaSearchOptions o;
        o.kappa_lo = kappa_lo;
        o.kappa_hi = kappa_hi;
        o.grid_points = kappa_grid;
        return o;
    }
    void echo(json& j) const {
        j["kappa_lo"] = kappa_lo;
        j["kappa_hi"] = kappa_hi;
        j["kappa_grid"] = kappa_grid;
    }
};

struct FitFlags {
    std::string input;
    std::string kappa = "auto";
    std::string variance = "bayes";
    double ci_level = 0.95;
    int knots = 7;
    std::string placement = "equal";
    int grid_points = 100;
    std::string out_dir = ".";
    SearchFlags search;
};

struct SimFlags {
    double shape = 13.0;
    double scale = 100.0;
    int n = 100;
    double censoring = 0.2;
    std::string censoring_mode = "random";
    int replicas = 1000;
    std::string estimators = "bayes,sandwich,np-sandwich";
    double ci_level = 0.95;
    int grid_points = 100;
    int knots = 7;
    std::string placement = "equal";
    std::string beta = "1";
    std::string cov;
    bool risk_multiplies = false;
    std::string sizes = "100,200,300,500,700,1000,1500,2000";
    std::string out_dir = ".";
    SearchFlags search;
};

struct CommonFlags {
    std::uint64_t seed = 42;
    int workers = 0;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

double to_double(const std::string& s, const std::string& what) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size() || s.empty()) throw UsageError("invalid " + what + ": '" + s + "'");
    return v;
}

std::vector<VarianceMethod> parse_methods(const std::string& list) {
    std::vector<VarianceMethod> out;
    for (const auto& name : split(list, ',')) {
        const auto m = parse_variance_method(name);
        if (!m) throw UsageError("unknown variance method '" + name + "' (expected bayes, sandwich, np-sandwich)");
        out.push_back(*m);
    }
    if (out.empty()) throw UsageError("no variance method given");
    return out;
}

KnotPlacement parse_placement(const std::string& s) {
    if (s == "equal") return KnotPlacement::Equal;
    if (s == "quantile") return KnotPlacement::Quantile;
    throw UsageError("knot placement must be 'equal' or 'quantile'");
}

CensoringMode parse_censoring_mode(const std::string& s) {
    if (s == "random") return CensoringMode::RandomSubset;
    if (s == "admin") return CensoringMode::Administrative;
    throw UsageError("censoring mode must be 'random' or 'admin'");
}

/// "u(0,1);u(0,3)"
std::vector<UniformRange> parse_cov(const std::string& s) {
    static const std::regex re(R"(\s*u\(\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)\s*)");
    std::vector<UniformRange> out;
    for (const auto& part : split(s, ';')) {
        std::smatch m;
        if (!std::regex_match(part, m, re)) throw UsageError("covariate range must look like u(lo,hi), got '" + part + "'");
        UniformRange r{to_double(m[1], "range bound"), to_double(m[2], "range bound")};
        if (!(r.hi > r.lo)) throw UsageError("empty covariate range '" + part + "'");
        out.push_back(r);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path prepare_out_dir(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

int cmd_fit(const FitFlags& f) {
    const auto methods = parse_methods(f.variance);
    const auto placement = parse_placement(f.placement);
    if (!(f.ci_level > 0.0 && f.ci_level < 1.0)) throw UsageError("ci-level must lie in (0, 1)");
    if (f.grid_points < 2) throw UsageError("grid-points must be at least 2");
    if (f.knots < 2) throw UsageError("knots must be at least 2");
    const bool auto_kappa = f.kappa == "auto";
    double kappa = 0.0;
    if (!auto_kappa) {
        kappa = to_double(f.kappa, "kappa");
        if (!(kappa >= 0.0)) throw UsageError("kappa must be nonnegative");
    }
    const auto search_opts = f.search.options();

    json config;
    config["command"] = "fit";
    config["input"] = f.input;
    config["kappa"] = f.kappa;
    config["variance"] = f.variance;
    config["ci_level"] = f.ci_level;
    config["knots"] = f.knots;
    config["knot_placement"] = f.placement;
    config["grid_points"] = f.grid_points;
    config["order"] = 4;
    f.search.echo(config);

    if (!fs::is_regular_file(f.input)) throw UsageError("input file not found: " + f.input);
    const SurvivalDataset data = read_dataset_csv(f.input);
    const auto out_dir = prepare_out_dir(f.out_dir);
    const SplineSpec spec = make_knots(data.time, f.knots, placement);

    json doc;
    doc["version"] = kVersion;
    doc["config"] = config;
    json diagnostics;
    diagnostics["n"] = data.size();
    diagnostics["events"] = data.n_events();
    diagnostics["covariates"] = data.n_covariates();
    diagnostics["knots"] = spec.distinct_knots();
    std::vector<std::string> messages;

    FitResult fit;
    json lcv_curve = json::array();
    if (auto_kappa) {
        const auto res = select_kappa(data, spec, search_opts);
        for (const auto& [k, v] : res.lcv_curve) lcv_curve.push_back({{"kappa", k}, {"lcv_a", v}});
        fit = res.fit;
        diagnostics["kappa_at_boundary"] = res.at_boundary;
        diagnostics["failed_grid_fits"] = res.failed_fits;
        messages.insert(messages.end(), res.diagnostics.begin(), res.diagnostics.end());
    } else {
        fit = fit_fixed_kappa(data, spec, kappa);
    }
    diagnostics["converged"] = fit.converged;
    diagnostics["iterations"] = fit.iterations;
    diagnostics["grad_norm"] = fit.grad_norm;
    diagnostics["theta_on_boundary"] = fit.boundary;
    diagnostics["pen_loglik"] = fit.pen_loglik;
    diagnostics["lcv_a"] = std::isfinite(fit.lcv_a) ? json(fit.lcv_a) : json(nullptr);

    const auto fit_json = to_json(fit);
    doc["kappa"] = fit.kappa;
    doc["lcv_curve"] = lcv_curve;
    doc["beta"] = fit_json["beta"];
    doc["theta"] = fit_json["theta"];
    doc["loglik"] = fit_json["loglik"];
    doc["edf"] = fit_json["edf"];

    bool numerical_failure = !fit.converged;
    if (!fit.converged) messages.push_back("optimizer did not converge");

    json variance = json::object();
    std::optional<VarianceEstimate> band_var;
    if (fit.converged) {
        for (auto m : methods) {
            try {
                auto v = estimate_variance(fit, m);
                variance[std::string(to_string(m))] = to_json(v.matrix);
                if (!band_var) band_var = std::move(v);
            } catch (const std::exception& e) {
                variance[std::string(to_string(m))] = nullptr;
                messages.push_back(std::string(to_string(m)) + ": " + e.what());
                numerical_failure = true;
            }
        }
    }
    doc["variance"] = variance;

    if (band_var) {
        const auto grid = linspace(spec.lower(), spec.upper(), f.grid_points);
        const auto hb = hazard_band(fit, *band_var, spec, grid, f.ci_level);
        const auto sb = survival_band(fit, *band_var, spec, grid, f.ci_level);
        std::ostringstream csv;
        write_curves_csv(csv, hb, sb);
        write_text(out_dir / "curves.csv", csv.str());
        diagnostics["band_variance"] = std::string(to_string(band_var->method));
        diagnostics["band_z"] = two_sided_z(f.ci_level);
        diagnostics["hazard_band_truncated"] = hb.truncated;
        diagnostics["survival_band_truncated"] = sb.truncated;
        diagnostics["band_boundary_suspect"] = hb.boundary_suspect;
        if (data.n_covariates() > 0) {
            json coefs = json::array();
            for (const auto& c : beta_intervals(fit, *band_var, f.ci_level))
                coefs.push_back({{"estimate", c.estimate}, {"sd", c.sd}, {"lower", c.lower}, {"upper", c.upper}});
            diagnostics["beta_intervals"] = coefs;
        }
    }
    diagnostics["messages"] = messages;
    doc["diagnostics"] = diagnostics;
    write_json(out_dir / "fit.json", doc);

    for (const auto& m : messages) std::cerr << "penhaz fit: " << m << '\n';
    return numerical_failure ? kExitNumerical : kExitOk;
}

Scenario make_scenario(const SimFlags& f, const CommonFlags& c, bool ph) {
    Scenario s;
    s.truth = {f.shape, f.scale};
    s.n = f.n;
    s.censoring_prop = f.censoring;
    s.censoring_mode = parse_censoring_mode(f.censoring_mode);
    s.replicas = f.replicas;
    s.seed = c.seed;
    s.estimators = parse_methods(f.estimators);
    s.ci_level = f.ci_level;
    s.n_gridpoints = f.grid_points;
    s.n_knots = f.knots;
    s.knot_placement = parse_placement(f.placement);
    s.kappa_search = f.search.options();
    s.risk_multiplies = f.risk_multiplies;
    if (ph) {
        for (const auto& b : split(f.beta, ',')) s.betas.push_back(to_double(b, "beta"));
        s.covariate_dists = f.cov.empty() ? std::vector<UniformRange>(s.betas.size()) : parse_cov(f.cov);
        if (s.covariate_dists.size() != s.betas.size())
            throw UsageError("--beta and --cov give different numbers of covariates");
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return s;
}

json common_echo(const CommonFlags& c) {
    return {{"seed", c.seed}, {"workers_do_not_affect_results", true}};
}

int cmd_simulate(const SimFlags& f, const CommonFlags& c, bool ph) {
    const Scenario s = make_scenario(f, c, ph);
    const auto out_dir = prepare_out_dir(f.out_dir);
    const CoverageReport report = ph ? ph_experiment(s, c.workers) : coverage_experiment(s, c.workers);

    json doc;
    doc["version"] = kVersion;
    json config = to_json(s);
    config["command"] = ph ? "simulate ph" : "simulate coverage";
    config.update(common_echo(c));
    doc["config"] = config;
    doc["report"] = to_json(report);
    write_json(out_dir / "report.json", doc);

    std::ostringstream csv;
    if (ph)
        write_ph_csv(csv, report);
    else
        write_coverage_csv(csv, report);
    write_text(out_dir / "report.csv", csv.str());

    if (report.warning)
        std::cerr << "penhaz: warning: " << report.replica_failures << " of " << s.replicas << " replicas failed\n";
    return report.replicas_ok > 0 ? kExitOk : kExitNumerical;
}

int cmd_kappa_seq(const SimFlags& f, const CommonFlags& c) {
    std::vector<int> sizes;
    for (const auto& s : split(f.sizes, ',')) {
        const double v = to_double(s, "sample size");
        if (v < 10 || v != static_cast<int>(v)) throw UsageError("sample sizes must be integers >= 10");
        if (!sizes.empty() && v <= sizes.back()) throw UsageError("sample sizes must be increasing");
        sizes.push_back(static_cast<int>(v));
    }
    if (sizes.empty()) throw UsageError("no sample sizes given");
    if (f.replicas < 1) throw UsageError("replicas must be at least 1");
    if (!(f.censoring >= 0.0 && f.censoring < 1.0)) throw UsageError("censoring must lie in [0, 1)");
    if (!(f.shape > 0.0 && f.scale > 0.0)) throw UsageError("shape and scale must be positive");

    KappaSequenceOptions opts;
    opts.replicas = f.replicas;
    opts.censoring_prop = f.censoring;
    opts.censoring_mode = parse_censoring_mode(f.censoring_mode);
    opts.n_knots = f.knots;
    opts.knot_placement = parse_placement(f.placement);
    opts.kappa_search = f.search.options();
    const WeibullTruth truth{f.shape, f.scale};
    const auto out_dir = prepare_out_dir(f.out_dir);
    const auto rows = kappa_sequence_experiment(sizes, truth, c.seed, opts, c.workers);

    json config;
    config["command"] = "kappa-seq";
    config["shape"] = f.shape;
    config["scale"] = f.scale;
    config["sizes"] = sizes;
    config["replicas"] = f.replicas;
    config["censoring"] = f.censoring;
    config["censoring_mode"] = std::string(to_string(opts.censoring_mode));
    config["knots"] = f.knots;
    config["knot_placement"] = f.placement;
    config["kappa_average"] = "geometric mean over replicas";
    f.search.echo(config);
    config.update(common_echo(c));

    json doc;
    doc["version"] = kVersion;
    doc["config"] = config;
    doc["rows"] = to_json(rows);
    const double slope = lambda_log_log_slope(rows);
    doc["lambda_log_log_slope"] = std::isfinite(slope) ? json(slope) : json(nullptr);
    write_json(out_dir / "report.json", doc);

    std::ostringstream csv;
    write_kappa_csv(csv, rows);
    write_text(out_dir / "report.csv", csv.str());

    for (const auto& r : rows)
        if (r.replica_kappas.empty()) return kExitNumerical;
    return kExitOk;
}

void add_sim_flags(CLI::App& app, SimFlags& f, bool ph) {
    app.add_option("--shape", f.shape, "Weibull shape")->capture_default_str();
    app.add_option("--scale", f.scale, "Weibull scale")->capture_default_str();
    app.add_option("--n", f.n, "Sample size per replica")->capture_default_str();
    app.add_option("--censoring", f.censoring, "Censored proportion")->capture_default_str();
    app.add_option("--censoring-mode", f.censoring_mode, "random | admin")->capture_default_str();
    app.add_option("--replicas", f.replicas, "Monte Carlo replicas")->capture_default_str();
    app.add_option("--knots", f.knots, "Distinct knots, boundaries included")->capture_default_str();
    app.add_option("--knot-placement", f.placement, "equal | quantile")->capture_default_str();
    app.add_option("--ci-level", f.ci_level, "Confidence level")->capture_default_str();
    app.add_option("--out-dir", f.out_dir, "Directory for report.json and report.csv")->capture_default_str();
    f.search.add(app);
    if (ph) {
        app.add_option("--beta", f.beta, "True coefficients, comma separated")->capture_default_str();
        app.add_option("--cov", f.cov, "Covariate ranges, e.g. \"u(0,1);u(0,3)\" (default u(0,1) each)");
        app.add_flag("--paper-formula", f.risk_multiplies, "Multiply -log U by exp(X beta) instead of dividing");
    } else {
        app.add_option("--estimators", f.estimators, "bayes,sandwich,np-sandwich")->capture_default_str();
        app.add_option("--grid-points", f.grid_points, "Coverage grid size")->capture_default_str();
    }
}

void add_common(CLI::App& app, CommonFlags& c) {
    app.add_option("--seed", c.seed, "Base seed (env PENHAZ_SEED)")->envname("PENHAZ_SEED")->capture_default_str();
    app.add_option("--workers", c.workers, "Worker threads (0 = all cores)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalized likelihood spline hazard estimation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    FitFlags fit_flags;
    auto* fit = app.add_subcommand("fit", "Fit a model to a CSV dataset");
    fit->add_option("--input", fit_flags.input, "CSV with header time,event[,x1..xp]")->required();
    fit->add_option("--kappa", fit_flags.kappa, "auto or a fixed nonnegative value")->capture_default_str();
    fit->add_option("--variance", fit_flags.variance, "bayes,sandwich,np-sandwich")->capture_default_str();
    fit->add_option("--ci-level", fit_flags.ci_level, "Confidence level")->capture_default_str();
    fit->add_option("--knots", fit_flags.knots, "Distinct knots, boundaries included")->capture_default_str();
    fit->add_option("--knot-placement", fit_flags.placement, "equal | quantile")->capture_default_str();
    fit->add_option("--grid-points", fit_flags.grid_points, "Rows in curves.csv")->capture_default_str();
    fit->add_option("--out-dir", fit_flags.out_dir, "Directory for fit.json and curves.csv")->capture_default_str();
    fit_flags.search.add(*fit);

    SimFlags cov_flags, ph_flags, seq_flags;
    CommonFlags cov_common, ph_common, seq_common;
    ph_flags.shape = 12.0;
    ph_flags.n = 3000;
    ph_flags.estimators = "bayes";

    auto* sim = app.add_subcommand("simulate", "Replicated simulation studies");
    sim->require_subcommand(1);
    auto* cov = sim->add_subcommand("coverage", "Pointwise band coverage for hazard and survival");
    add_sim_flags(*cov, cov_flags, false);
    add_common(*cov, cov_common);
    auto* ph = sim->add_subcommand("ph", "Regression coefficient coverage");
    add_sim_flags(*ph, ph_flags, true);
    add_common(*ph, ph_common);

    seq_flags.replicas = 10;
    auto* seq = app.add_subcommand("kappa-seq", "Selected kappa as a function of n");
    seq->add_option("--sizes", seq_flags.sizes, "Increasing sample sizes")->capture_default_str();
    seq->add_option("--shape", seq_flags.shape, "Weibull shape")->capture_default_str();
    seq->add_option("--scale", seq_flags.scale, "Weibull scale")->capture_default_str();
    seq->add_option("--replicas", seq_flags.replicas, "Replicas per size")->capture_default_str();
    seq->add_option("--censoring", seq_flags.censoring, "Censored proportion")->capture_default_str();
    seq->add_option("--censoring-mode", seq_flags.censoring_mode, "random | admin")->capture_default_str();
    seq->add_option("--knots", seq_flags.knots, "Distinct knots, boundaries included")->capture_default_str();
    seq->add_option("--knot-placement", seq_flags.placement, "equal | quantile")->capture_default_str();
    seq->add_option("--out-dir", seq_flags.out_dir, "Directory for report.json and report.csv")->capture_default_str();
    seq_flags.search.add(*seq);
    add_common(*seq, seq_common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (fit->parsed()) return cmd_fit(fit_flags);
        if (cov->parsed()) return cmd_simulate(cov_flags, cov_common, false);
        if (ph->parsed()) return cmd_simulate(ph_flags, ph_common, true);
        if (seq->parsed()) return cmd_kappa_seq(seq_flags, seq_common);
    } catch (const UsageError& e) {
        std::cerr << "penhaz: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "penhaz: parse error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "penhaz: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "penhaz: " << e.what() << '\n';
        return kExitNumerical;
    }
    return kExitUsage;
}
