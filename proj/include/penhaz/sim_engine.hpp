#pragma once
// Synthetic survival data and replicated coverage experiments against a
// known Weibull truth.

#include "penhaz/estimator.hpp"
#include "penhaz/rng.hpp"
#include "penhaz/spline_basis.hpp"
#include "penhaz/survival_model.hpp"
#include "penhaz/variance.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace penhaz {

/// h(t) = (a/b)(t/b)^(a-1), S(t) = exp(-(t/b)^a).
struct WeibullTruth {
    double shape = 13.0;
    double scale = 100.0;

    double hazard(double t) const;
    double cumulative_hazard(double t) const;
    double survival(double t) const { return std::exp(-cumulative_hazard(t)); }
};

/// Inverse CDF: b (-log u)^(1/a).
double weibull_from_uniform(double u, const WeibullTruth& truth);

std::vector<double> gen_weibull(int n, const WeibullTruth& truth, RandomStream& rng);

enum class CensoringMode {
    RandomSubset,    // floor(prop n) random subjects get C_i = V_i T_i, V_i ~ U(0,1)
    Administrative,  // the floor(prop n) largest times are censored at a common cutoff
};

std::string_view to_string(CensoringMode mode);

struct CensoredSample {
    std::vector<double> time;
    std::vector<std::uint8_t> event;
};

CensoredSample apply_censoring(std::span<const double> times, double prop, RandomStream& rng,
                               CensoringMode mode = CensoringMode::RandomSubset);

struct UniformRange {
    double lo = 0.0;
    double hi = 1.0;
};

/// Proportional-hazards sample with Weibull(shape, scale) baseline, all
/// subjects uncensored. T_i = b (-log U_i / exp(X_i beta))^(1/k); with
/// risk_multiplies the exponent factor multiplies instead of divides.
SurvivalDataset gen_ph(int n, const WeibullTruth& baseline, std::span<const double> betas,
                       std::span<const UniformRange> covariate_dists, RandomStream& rng,
                       bool risk_multiplies = false);

struct TrueCurves {
    std::vector<double> hazard;
    std::vector<double> survival;
};

TrueCurves true_curves(const WeibullTruth& truth, std::span<const double> times);

/// Fraction of grid points where truth lies inside [lower, upper].
double coverage_fraction(const CurveBand& band, std::span<const double> truth);

struct Scenario {
    WeibullTruth truth;
    int n = 100;
    double censoring_prop = 0.2;
    CensoringMode censoring_mode = CensoringMode::RandomSubset;
    std::vector<double> betas;
    std::vector<UniformRange> covariate_dists;
    bool risk_multiplies = false;
    int replicas = 1000;
    std::uint64_t seed = 42;
    std::vector<VarianceMethod> estimators{VarianceMethod::Bayes, VarianceMethod::SandwichNonPenalized,
                                           VarianceMethod::SandwichPenalized};
    double ci_level = 0.95;
    int n_gridpoints = 100;
    int n_knots = 7;
    KnotPlacement knot_placement = KnotPlacement::Equal;
    KappaSearchOptions kappa_search;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;
};

struct EstimatorCoverage {
    VarianceMethod method = VarianceMethod::Bayes;
    double survival_coverage = 0.0;  // mean over replicas of per-grid fractions
    double hazard_coverage = 0.0;
    double survival_coverage_se = 0.0;  // MC standard error of the mean
    double hazard_coverage_se = 0.0;
    double survival_mean_width = 0.0;
    double hazard_mean_width = 0.0;
    int replicas_used = 0;
    int failures = 0;  // replicas where this variance could not be formed
};

struct CoefficientSummary {
    VarianceMethod method = VarianceMethod::Bayes;
    int index = 0;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double empirical_sd = 0.0;  // sd of beta_hat across replicas
    double mean_sd = 0.0;
    double mean_width = 0.0;
    double coverage = 0.0;
    int replicas_used = 0;
};

struct CoverageReport {
    std::string kind;  // "coverage" or "ph"
    Scenario scenario;
    std::vector<EstimatorCoverage> estimators;
    std::vector<CoefficientSummary> coefficients;
    std::vector<double> kappas;  // selected kappa per successful replica, replica order
    int replicas_ok = 0;
    int replica_failures = 0;
    bool warning = false;  // more than 5% of replicas failed
    std::vector<std::string> failure_messages;
};

/// Runs body(i) for i in [0, count) on `workers` threads (0 = hardware
/// concurrency). Exceptions from body propagate after all workers stop.
void parallel_for(int count, int workers, const std::function<void(int)>& body);

CoverageReport coverage_experiment(const Scenario& scenario, int workers = 0);

CoverageReport ph_experiment(const Scenario& scenario, int workers = 0);

struct KappaSequenceOptions {
    int replicas = 10;
    double censoring_prop = 0.2;
    CensoringMode censoring_mode = CensoringMode::RandomSubset;
    int n_knots = 7;
    KnotPlacement knot_placement = KnotPlacement::Equal;
    KappaSearchOptions kappa_search;
};

struct KappaSequenceRow {
    int n = 0;
    double kappa = 0.0;  // geometric mean of the per-replica selections
    double kappa_over_sqrt_n = 0.0;
    double lambda = 0.0;  // kappa / n
    std::vector<double> replica_kappas;
    int failures = 0;
};

std::vector<KappaSequenceRow> kappa_sequence_experiment(std::span<const int> sizes, const WeibullTruth& truth,
                                                        std::uint64_t base_seed,
                                                        const KappaSequenceOptions& options = {},
                                                        int workers = 0);

/// Least-squares slope of log(lambda_n) on log(n).
double lambda_log_log_slope(std::span<const KappaSequenceRow> rows);

}  // namespace penhaz
