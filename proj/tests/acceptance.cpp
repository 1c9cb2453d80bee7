// Acceptance run: curve and coefficient coverage studies, the kappa sequence
// and the oracle suite. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include "oracles.hpp"

#include "penhaz/report_io.hpp"
#include "penhaz/sim_engine.hpp"
#include "penhaz/variance.hpp"

#include <CLI11.hpp>
#include <Eigen/LU>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

using namespace penhaz;

namespace {

struct Settings {
    int replicas = 1000;
    int seq_replicas = 10;
    int workers = 0;
    std::uint64_t seed = 42;
    bool skip_simulations = false;
};

int failures = 0;

void verdict(bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

void note(const std::string& line) {
    std::printf("    %s\n", line.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- Curve coverage ------------------------------------------------------

struct CoverageTargets {
    VarianceMethod method;
    std::array<double, 3> survival;  // percent
    std::array<double, 3> hazard;    // percent; negative means "at most 70"
};

void curve_coverage(const Settings& s) {
    const std::array<int, 3> sizes{100, 500, 1000};
    const std::vector<CoverageTargets> targets{
        {VarianceMethod::Bayes, {92, 93, 95}, {92, 93, 93}},
        {VarianceMethod::SandwichNonPenalized, {98, 95, 93}, {-1, -1, -1}},
        {VarianceMethod::SandwichPenalized, {93, 87, 89}, {98, 97, 97}},
    };
    std::vector<CoverageReport> reports;
    for (int n : sizes) {
        Scenario sc;
        sc.n = n;
        sc.replicas = s.replicas;
        sc.seed = s.seed;
        const auto t0 = std::chrono::steady_clock::now();
        reports.push_back(coverage_experiment(sc, s.workers));
        const auto& r = reports.back();
        note("n=" + std::to_string(n) + ": " + std::to_string(r.replicas_ok) + " replicas ok, " +
             std::to_string(r.replica_failures) + " failed, " + fmt("%.1f s", seconds_since(t0)));
    }

    bool ok1 = true, ok2 = true;
    std::ostringstream d1, d2;
    for (const auto& tg : targets) {
        for (std::size_t c = 0; c < sizes.size(); ++c) {
            const EstimatorCoverage* e = nullptr;
            for (const auto& x : reports[c].estimators)
                if (x.method == tg.method) e = &x;
            const std::string cell = std::string(to_string(tg.method)) + " n=" + std::to_string(sizes[c]);
            const double sc = 100.0 * e->survival_coverage, hc = 100.0 * e->hazard_coverage;
            const bool s_ok = std::abs(sc - tg.survival[c]) <= 4.0;
            ok1 = ok1 && s_ok;
            note("survival " + cell + fmt(": %.1f%%", sc) + fmt(" (target %.0f +- 4)", tg.survival[c]) +
                 fmt(" se %.2f", 100.0 * e->survival_coverage_se) + (s_ok ? "" : "  <- off"));
            bool h_ok;
            if (tg.hazard[c] < 0) {
                h_ok = hc <= 70.0;
                note("hazard " + cell + fmt(": %.1f%% (target <= 70)", hc) + (h_ok ? "" : "  <- off"));
            } else {
                h_ok = std::abs(hc - tg.hazard[c]) <= 4.0;
                note("hazard " + cell + fmt(": %.1f%%", hc) + fmt(" (target %.0f +- 4)", tg.hazard[c]) +
                     fmt(" se %.2f", 100.0 * e->hazard_coverage_se) + (h_ok ? "" : "  <- off"));
            }
            ok2 = ok2 && h_ok;
            if (!s_ok) d1 << cell << ' ';
            if (!h_ok) d2 << cell << ' ';
        }
    }
    verdict(ok1, "survival_band_coverage", ok1 ? "all 9 cells within 4pp" : "cells off: " + d1.str());
    verdict(ok2, "hazard_band_coverage", ok2 ? "all 9 cells within bounds" : "cells off: " + d2.str());
}

// ---- Coefficients --------------------------------------------------------

void coefficient_coverage(const Settings& s) {
    struct Target {
        std::string name;
        std::vector<double> beta;
        std::vector<UniformRange> ranges;
        std::vector<double> mean, sd, coverage;
        double mean_tol, sd_tol;
    };
    const std::vector<Target> targets{
        {"coefficients_one_covariate", {1.0}, {{0.0, 1.0}}, {1.000}, {0.05}, {95}, 0.01, 0.01},
        {"coefficients_two_covariates", {1.0, -1.0}, {{0.0, 1.0}, {0.0, 3.0}}, {1.003, -0.969}, {0.06, 0.08}, {96, 91}, 0.02,
         0.02},
    };
    for (const auto& tg : targets) {
        Scenario sc;
        sc.truth = {12.0, 100.0};
        sc.n = 3000;
        sc.replicas = s.replicas;
        sc.seed = s.seed;
        sc.betas = tg.beta;
        sc.covariate_dists = tg.ranges;
        sc.estimators = {VarianceMethod::Bayes};
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = ph_experiment(sc, s.workers);
        note(tg.name + ": " + std::to_string(r.replicas_ok) + " replicas ok, " + fmt("%.1f s", seconds_since(t0)));
        bool ok = true;
        std::ostringstream detail;
        for (const auto& c : r.coefficients) {
            const auto j = static_cast<std::size_t>(c.index - 1);
            const bool m_ok = std::abs(c.mean_estimate - tg.mean[j]) <= tg.mean_tol;
            const bool s_ok = std::abs(c.mean_sd - tg.sd[j]) <= tg.sd_tol;
            const bool c_ok = std::abs(100.0 * c.coverage - tg.coverage[j]) <= 3.0;
            ok = ok && m_ok && s_ok && c_ok;
            note("beta" + std::to_string(c.index) + fmt(": mean %.4f", c.mean_estimate) +
                 fmt(" (target %.3f)", tg.mean[j]) + fmt(", sd %.4f", c.mean_sd) + fmt(" (target %.2f)", tg.sd[j]) +
                 fmt(", empirical sd %.4f", c.empirical_sd) + fmt(", width %.3f", c.mean_width) +
                 fmt(", coverage %.1f%%", 100.0 * c.coverage) + fmt(" (target %.0f)", tg.coverage[j]));
            if (!m_ok) detail << "beta" << c.index << " mean ";
            if (!s_ok) detail << "beta" << c.index << " sd ";
            if (!c_ok) detail << "beta" << c.index << " coverage ";
        }
        verdict(ok, tg.name, ok ? "mean, sd and coverage within tolerance" : "off: " + detail.str());
    }
}

// ---- Kappa sequence ------------------------------------------------------

void kappa_decay(const Settings& s) {
    const std::vector<int> sizes{100, 200, 300, 500, 700, 1000, 1500, 2000};
    KappaSequenceOptions opt;
    opt.replicas = s.seq_replicas;
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = kappa_sequence_experiment(sizes, {13.0, 100.0}, s.seed, opt, s.workers);
    note(fmt("kappa sequence: %.1f s", seconds_since(t0)));
    bool decreasing = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        note("n=" + std::to_string(rows[i].n) + fmt(": kappa_n %.4g", rows[i].kappa) +
             fmt(", kappa_n/sqrt(n) %.4g", rows[i].kappa_over_sqrt_n) + fmt(", lambda_n %.4g", rows[i].lambda));
        if (i > 0 && !(rows[i].lambda < rows[i - 1].lambda)) decreasing = false;
    }
    const double slope = lambda_log_log_slope(rows);
    const bool ok = decreasing && slope > -1.0 && slope < 0.0;
    verdict(ok, "kappa_sequence_decay",
            std::string(decreasing ? "monotone decreasing" : "not monotone") + fmt(", log-log slope %.3f", slope) +
                " (target in (-1, 0))");
}

// ---- Oracle suite --------------------------------------------------------

void gradient_oracle() {
    RandomStream rng(2024);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 30 + static_cast<int>(rng.below(50)), p = static_cast<int>(rng.below(3));
        std::vector<double> t(n);
        std::vector<std::uint8_t> e(n);
        Eigen::MatrixXd x(n, p);
        for (int i = 0; i < n; ++i) {
            t[i] = rng.uniform(1.0, 80.0);
            e[i] = rng.uniform() < 0.75;
            for (int j = 0; j < p; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
        }
        const SurvivalDataset data(t, e, x);
        const auto spec = make_knots(t, 3 + static_cast<int>(rng.below(6)));
        Eigen::VectorXd xi(p + spec.size());
        for (int j = 0; j < p; ++j) xi[j] = rng.uniform(-0.5, 0.5);
        for (int k = 0; k < spec.size(); ++k) xi[p + k] = rng.uniform(0.05, 1.0);
        const double kappa = rng.uniform(0.0, 100.0);
        const auto make = [&](const Eigen::VectorXd& v) {
            return ModelParams::from_theta(v.head(p), v.tail(spec.size()).cwiseMax(0.0));
        };
        const auto f = [&](const Eigen::VectorXd& v) { return penalized_loglik(data, make(v), spec, kappa); };
        const auto fd = oracle::fd_gradient(f, xi);
        const auto g = pl_gradient(data, make(xi), spec, kappa);
        for (Eigen::Index j = 0; j < g.size(); ++j)
            worst = std::max(worst, std::abs(g[j] - fd[j]) / std::max(1.0, std::abs(g[j])));
    }
    verdict(worst <= 1e-5, "oracle_gradient_fd", fmt("max relative error %.2e over 20 configurations", worst));
}

void penalty_oracle() {
    RandomStream rng(7);
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> k{rng.uniform(0.0, 10.0)};
        const int interior = static_cast<int>(rng.below(6));
        for (int j = 0; j <= interior; ++j) k.push_back(k.back() + rng.uniform(0.5, 20.0));
        const SplineSpec spec(k, 4);
        const auto ref = oracle::penalty_by_quadrature(spec, 40);
        worst = std::max(worst, (penalty_matrix(spec) - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff());
    }
    const double w11 = penalty_matrix(SplineSpec({0.0, 1.0}, 4))(0, 0);
    const bool ok = worst <= 1e-8 && std::abs(w11 - 192.0) <= 1e-9 * 192.0;
    verdict(ok, "oracle_penalty_quadrature",
            fmt("max relative error %.2e", worst) + fmt(", omega_11 = %.12g on Bernstein knots", w11));
}

void loo_oracle() {
    const auto data = oracle::weibull_data(30, 13.0, 100.0, 0.2, 8);
    const auto spec = make_knots(data.time, 5);
    double worst = 0.0;
    std::ostringstream detail;
    for (double kappa : {1e3, 1e4}) {
        const auto fit = fit_fixed_kappa(data, spec, kappa);
        const double exact = oracle::exact_loo(data, spec, kappa, fit.params);
        const double approx = lcv_a(data, fit);
        const double rel = std::abs(approx - exact) / std::abs(exact);
        worst = std::max(worst, rel);
        detail << "kappa " << kappa << ": LCV_a " << approx << " vs exact " << exact << "; ";
    }
    verdict(worst <= 0.05, "oracle_lcv_vs_exact_loo", detail.str() + fmt("max relative gap %.3f (limit 0.05)", worst));
}

void kappa_zero_oracle() {
    const auto data = oracle::ph_data(400, 2.0, 100.0, {0.7}, 0.2, 13);
    const auto spec = make_knots(data.time, 5);
    const auto fit = fit_fixed_kappa(data, spec, 0.0);
    const auto pen = var_sandwich(fit, true), np = var_sandwich(fit, false);
    const double scale = np.matrix.cwiseAbs().maxCoeff();
    const double sandwich_gap = (pen.matrix - np.matrix).cwiseAbs().maxCoeff() / scale;
    const auto idx = fit.free_coordinates();
    const Eigen::MatrixXd hinv = fit.H_L(idx, idx).inverse();
    const double bayes_gap =
        (var_bayes(fit).matrix(idx, idx) - hinv).cwiseAbs().maxCoeff() / hinv.cwiseAbs().maxCoeff();
    verdict(fit.converged && sandwich_gap <= 1e-12 && bayes_gap <= 1e-8, "oracle_kappa_zero_variances",
            fmt("sandwich gap %.2e", sandwich_gap) + fmt(", Bayes vs inverse information %.2e", bayes_gap));
}

void calibrated_oracle() {
    const WeibullTruth truth{13.0, 100.0};
    const auto grid = linspace(60.0, 110.0, 100);
    const auto curves = true_curves(truth, grid);
    RandomStream rng(31);
    const int reps = 2000;
    const double z = two_sided_z(0.95);
    std::vector<double> per_rep;
    for (int r = 0; r < reps; ++r) {
        CurveBand b;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double sd = 0.02 + 0.05 * curves.survival[i] * (1.0 - curves.survival[i]);
            const double est = curves.survival[i] + sd * rng.normal();
            b.lower.push_back(est - z * sd);
            b.upper.push_back(est + z * sd);
        }
        per_rep.push_back(coverage_fraction(b, curves.survival));
    }
    double mean = 0.0, ss = 0.0;
    for (double v : per_rep) mean += v;
    mean /= reps;
    for (double v : per_rep) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / (reps - 1) / reps);
    verdict(std::abs(mean - 0.95) <= 2.0 * se, "oracle_calibrated_coverage",
            fmt("coverage %.4f", mean) + fmt(", 2 MC se = %.4f", 2.0 * se));
}

void determinism_oracle() {
    Scenario sc;
    sc.n = 80;
    sc.replicas = 8;
    sc.seed = 17;
    sc.kappa_search.grid_points = 12;
    const auto bytes = [](const CoverageReport& r) {
        std::ostringstream out;
        out << to_json(r).dump() << '\n';
        write_coverage_csv(out, r);
        return out.str();
    };
    const auto a = bytes(coverage_experiment(sc, 1)), b = bytes(coverage_experiment(sc, 1)),
               c = bytes(coverage_experiment(sc, 4));
    Scenario ph = sc;
    ph.betas = {1.0};
    ph.covariate_dists = {{0.0, 1.0}};
    ph.estimators = {VarianceMethod::Bayes};
    const auto pa = to_json(ph_experiment(ph, 1)).dump(), pc = to_json(ph_experiment(ph, 3)).dump();
    const bool ok = a == b && a == c && pa == pc;
    verdict(ok, "oracle_determinism", ok ? "reruns and worker counts 1/3/4 give byte-identical reports"
                                         : "reports differ between runs or worker counts");
}

void oracle_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    gradient_oracle();
    penalty_oracle();
    loo_oracle();
    kappa_zero_oracle();
    calibrated_oracle();
    determinism_oracle();
    const double elapsed = seconds_since(t0);
    verdict(elapsed < 60.0, "oracle_suite_runtime", fmt("%.1f s (limit 60 s)", elapsed));
}

}  // namespace

int main(int argc, char** argv) {
    Settings s;
    CLI::App app{"penhaz acceptance run"};
    app.add_option("--replicas", s.replicas, "Replicas per simulation cell")->capture_default_str();
    app.add_option("--seq-replicas", s.seq_replicas, "Replicas per size in the kappa sequence")->capture_default_str();
    app.add_option("--workers", s.workers, "Worker threads (0 = all cores)")->capture_default_str();
    app.add_option("--seed", s.seed, "Base seed")->capture_default_str();
    app.add_flag("--oracles-only", s.skip_simulations, "Run only the oracle suite");
    CLI11_PARSE(app, argc, argv);

    try {
        oracle_suite();
        if (!s.skip_simulations) {
            curve_coverage(s);
            coefficient_coverage(s);
            kappa_decay(s);
        }
    } catch (const std::exception& e) {
        verdict(false, "acceptance_run", std::string("aborted: ") + e.what());
    }
    std::printf("summary: %d criteria failed\n", failures);
    return failures ? 1 : 0;
}
