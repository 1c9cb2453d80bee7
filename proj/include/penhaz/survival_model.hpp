#pragma once
// Proportional-hazards log-likelihood with an M-spline baseline hazard,
// roughness penalty, and analytic derivatives in xi = (beta, theta).

#include "penhaz/spline_basis.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace penhaz {

/// Right-censored sample: time[i] = min(T_i, C_i), event[i] = 1 when T_i
/// was observed. covariates is n x p (p may be zero).
struct SurvivalDataset {
    std::vector<double> time;
    std::vector<std::uint8_t> event;
    Eigen::MatrixXd covariates;

    SurvivalDataset() = default;
    SurvivalDataset(std::vector<double> t, std::vector<std::uint8_t> e, Eigen::MatrixXd x = {});

    int size() const noexcept { return static_cast<int>(time.size()); }
    int n_covariates() const noexcept { return static_cast<int>(covariates.cols()); }
    int n_events() const noexcept;

    /// Throws std::invalid_argument on non-positive or non-finite times,
    /// mismatched lengths, or an empty sample.
    void validate() const;

    SurvivalDataset subset(const std::vector<int>& rows) const;
};

/// theta = zeta^2 elementwise; zeta is the unconstrained coordinate the
/// optimizer works in.
struct ModelParams {
    Eigen::VectorXd beta;
    Eigen::VectorXd zeta;

    static ModelParams from_theta(Eigen::VectorXd beta, const Eigen::VectorXd& theta);

    Eigen::VectorXd theta() const { return zeta.array().square().matrix(); }
    int dim() const noexcept { return static_cast<int>(beta.size() + zeta.size()); }
};

/// Per-subject basis values cached once per (data, spec): column-major n x p
/// covariates, n x m M-splines and I-splines at the observed times.
class LikelihoodEvaluator {
public:
    LikelihoodEvaluator(const SurvivalDataset& data, const SplineSpec& spec);

    struct Derivatives {
        double loglik = 0.0;
        Eigen::VectorXd gradient;      // dL/dxi
        Eigen::MatrixXd neg_hessian;   // -d2L/dxi2; empty unless requested
    };

    int n() const noexcept { return n_; }
    int p() const noexcept { return p_; }
    int m() const noexcept { return m_; }
    const SplineSpec& spec() const noexcept { return spec_; }

    /// -infinity when the baseline hazard vanishes at an event time.
    double loglik(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta) const;
    Derivatives derivatives(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta,
                            bool with_hessian) const;
    /// n x (p+m) matrix whose row i is dL_i/dxi.
    Eigen::MatrixXd scores(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta) const;

private:
    struct Work {
        Eigen::VectorXd eta, w, cum, haz;
    };
    void predictors(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta, Work& work) const;

    SplineSpec spec_;
    int n_, p_, m_;
    Eigen::MatrixXd x_;
    Eigen::MatrixXd mbasis_;
    Eigen::MatrixXd ibasis_;
    Eigen::VectorXd delta_;
};

double log_likelihood(const SurvivalDataset& data, const ModelParams& params, const SplineSpec& spec);

/// theta' Omega theta.
double penalty_value(const ModelParams& params, const SplineSpec& spec);

double penalized_loglik(const SurvivalDataset& data, const ModelParams& params,
                        const SplineSpec& spec, double kappa);

/// dL_i/dxi for subject i.
Eigen::VectorXd score_individual(const SurvivalDataset& data, int i, const ModelParams& params,
                                 const SplineSpec& spec);

/// sum_i v_i - kappa (0_p, 2 Omega theta).
Eigen::VectorXd pl_gradient(const SurvivalDataset& data, const ModelParams& params,
                            const SplineSpec& spec, double kappa);

/// H_pL = -d2L/dxi2 + kappa blockdiag(0_p, 2 Omega).
Eigen::MatrixXd pl_hessian(const SurvivalDataset& data, const ModelParams& params,
                           const SplineSpec& spec, double kappa);

/// kappa * dJ/dxi = (0_p, 2 kappa Omega theta).
Eigen::VectorXd penalty_gradient(const Eigen::VectorXd& theta, const SplineSpec& spec, int p,
                                 double kappa);

}  // namespace penhaz
