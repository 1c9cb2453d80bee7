#pragma once
// Variance estimators for the penalized MLE and pointwise confidence bands
// for the baseline hazard, the baseline survival function, and the
// regression coefficients.
//
// Matrices are built from the unnormalized H_pL and raw score outer
// products, so they estimate Var(xi_hat) directly; no further 1/n factor
// enters the interval formulas.

#include "penhaz/estimator.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace penhaz {

enum class VarianceMethod { Bayes, SandwichPenalized, SandwichNonPenalized };

/// "bayes", "sandwich", "np-sandwich".
std::string_view to_string(VarianceMethod method);
std::optional<VarianceMethod> parse_variance_method(std::string_view name);

struct VarianceEstimate {
    VarianceMethod method = VarianceMethod::Bayes;
    Eigen::MatrixXd matrix;   // (p+m) x (p+m), ordered (beta, theta)
    double condition = 0.0;   // of the inverted Hessian
};

/// H_pL^-1.
VarianceEstimate var_bayes(const FitResult& fit);

/// penalized: H_pL^-1 [sum U_i U_i'] H_pL^-1 with U_i = v_i + kappa dJ/dxi.
/// otherwise: H_L^-1 [sum v_i v_i'] H_L^-1, both at the penalized maximum.
VarianceEstimate var_sandwich(const FitResult& fit, bool penalized);

VarianceEstimate estimate_variance(const FitResult& fit, VarianceMethod method);

/// Standard normal quantile.
double normal_quantile(double p);

/// z_{1-alpha/2} for a two-sided interval at confidence `level`.
double two_sided_z(double level);

struct CurveBand {
    std::vector<double> times;
    std::vector<double> estimate;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<double> sd;
    double level = 0.95;
    bool truncated = false;         // some bound was clipped to the natural range
    bool boundary_suspect = false;  // the fit has theta_k on the boundary
};

/// Band times must lie in [0, spec.upper()]; OutOfRangeError otherwise.
/// h(t) = sum theta_k M_k(t) +- z sqrt(M' V_theta M), lower bound clipped at 0.
CurveBand hazard_band(const FitResult& fit, const VarianceEstimate& var, const SplineSpec& spec,
                      std::span<const double> times, double level);

/// S(t) = exp(-sum theta_k I_k(t)) +- z sqrt(g' V_theta g), g_k = -I_k(t) S(t),
/// clipped to [0, 1].
CurveBand survival_band(const FitResult& fit, const VarianceEstimate& var, const SplineSpec& spec,
                        std::span<const double> times, double level);

/// dS(t)/dtheta.
Eigen::VectorXd survival_gradient(const Eigen::VectorXd& theta, const SplineSpec& spec, double t);

struct CoefficientInterval {
    double estimate = 0.0;
    double sd = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

std::vector<CoefficientInterval> beta_intervals(const FitResult& fit, const VarianceEstimate& var,
                                                double level);

/// `count` equally spaced points on [lo, hi], both ends included.
std::vector<double> linspace(double lo, double hi, int count);

}  // namespace penhaz
