#pragma once
// Penalized maximum likelihood for fixed kappa and smoothing-parameter
// selection by approximate likelihood cross-validation (LCV_a).

#include "penhaz/survival_model.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace penhaz {

struct FitOptions {
    int max_iter = 200;
    double rel_value_tol = 1e-9;  // |delta pL| / max(1, |pL|)
    double grad_tol = 1e-6;       // ||grad_zeta||_inf <= grad_tol * (1 + |pL|)
    double rel_param_tol = 1e-8;  // ||delta||_inf / (1 + ||x||_inf)
    double boundary_theta = 1e-10;
};

/// Everything downstream inference needs, evaluated at the penalized maximum
/// in the (beta, theta) parameterization.
struct FitResult {
    ModelParams params;
    double kappa = 0.0;
    double loglik = 0.0;
    double pen_loglik = 0.0;
    Eigen::MatrixXd H_pL;    // -d2L/dxi2 + kappa blockdiag(0, 2 Omega)
    Eigen::MatrixXd H_L;     // -d2L/dxi2
    Eigen::MatrixXd scores;  // n x (p+m), row i = v_i
    Eigen::VectorXd penalty_grad;  // kappa dJ/dxi = (0_p, 2 kappa Omega theta)
    double lcv_a = 0.0;      // NaN when H_pL is singular
    double edf = 0.0;        // n * lcv_trace_term
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;  // ||grad_zeta||_inf at the returned point
    bool boundary = false;   // some theta_k <= boundary_theta
    double boundary_theta = 1e-10;

    int n_covariates() const noexcept { return static_cast<int>(params.beta.size()); }
    Eigen::VectorXd theta() const { return params.theta(); }

    /// Coordinates of xi = (beta, theta) off the theta >= 0 boundary. The
    /// chain-rule Jacobian 2 zeta vanishes on the others, so they carry no
    /// variance and drop out of the LCV_a trace.
    std::vector<Eigen::Index> free_coordinates() const;
};

/// Start used when no init is given: beta = 0 and equal theta_k chosen so the
/// fitted cumulative hazard at the last knot equals events / n.
ModelParams default_init(const SurvivalDataset& data, const SplineSpec& spec);

/// Throws SingularDesignError when the covariates (together with the
/// baseline level) are rank deficient.
void check_design(const SurvivalDataset& data);

FitResult fit_fixed_kappa(const SurvivalDataset& data, const SplineSpec& spec, double kappa,
                          const std::optional<ModelParams>& init = std::nullopt,
                          const FitOptions& options = {});

/// Same, reusing cached basis evaluations. Does not validate the data.
FitResult fit_fixed_kappa(const LikelihoodEvaluator& model, double kappa, const ModelParams& init,
                          const FitOptions& options = {});

/// -L/n + Trace((H_pL / n)^-1 K), K = n^-1 sum v_i d_i',
/// d_i = (v_i + kappa dJ/dxi) / (n-1). With the per-observation Hessian the
/// trace matches a one-step leave-one-out expansion and is about edf / n.
/// Throws NumericalSingularityError when H_pL cannot be inverted.
double lcv_a(const SurvivalDataset& data, const FitResult& fit);

/// The trace term of lcv_a alone.
double lcv_trace_term(const FitResult& fit);

struct KappaSearchOptions {
    double kappa_lo = 1e-2;
    double kappa_hi = 1e8;
    int grid_points = 30;        // log-spaced over [kappa_lo, kappa_hi]
    double refine_rel_width = 1e-2;
    FitOptions fit;
};

struct KappaSearchResult {
    double kappa_hat = 0.0;
    std::vector<std::pair<double, double>> lcv_curve;  // (kappa, LCV_a), ascending kappa
    FitResult fit;
    bool at_boundary = false;  // minimum sits on an end of the grid
    int failed_fits = 0;
    std::vector<std::string> diagnostics;
};

KappaSearchResult select_kappa(const SurvivalDataset& data, const SplineSpec& spec,
                               const KappaSearchOptions& options = {});

}  // namespace penhaz
