#include "penhaz/survival_model.hpp"

#include "penhaz/kernels.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

namespace penhaz {
namespace {

std::span<const double> col(const Eigen::MatrixXd& a, int j) {
    return {a.data() + static_cast<std::ptrdiff_t>(j) * a.rows(), static_cast<std::size_t>(a.rows())};
}

std::span<double> col(Eigen::MatrixXd& a, int j) {
    return {a.data() + static_cast<std::ptrdiff_t>(j) * a.rows(), static_cast<std::size_t>(a.rows())};
}

std::span<const double> view(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

std::span<double> view(Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

SurvivalDataset::SurvivalDataset(std::vector<double> t, std::vector<std::uint8_t> e, Eigen::MatrixXd x)
    : time(std::move(t)), event(std::move(e)), covariates(std::move(x)) {
    if (covariates.size() == 0) covariates.resize(static_cast<Eigen::Index>(time.size()), 0);
}

int SurvivalDataset::n_events() const noexcept {
    int d = 0;
    for (auto e : event) d += e ? 1 : 0;
    return d;
}

void SurvivalDataset::validate() const {
    if (time.empty()) throw std::invalid_argument("dataset is empty");
    if (event.size() != time.size())
        throw std::invalid_argument("time and event columns differ in length");
    if (covariates.rows() != static_cast<Eigen::Index>(time.size()))
        throw std::invalid_argument("covariate matrix row count differs from sample size");
    for (std::size_t i = 0; i < time.size(); ++i) {
        if (!(time[i] > 0.0) || !std::isfinite(time[i]))
            throw std::invalid_argument("time[" + std::to_string(i) + "] must be positive and finite");
        if (event[i] > 1) throw std::invalid_argument("event[" + std::to_string(i) + "] must be 0 or 1");
    }
    if (!covariates.allFinite()) throw std::invalid_argument("covariates must be finite");
}

SurvivalDataset SurvivalDataset::subset(const std::vector<int>& rows) const {
    SurvivalDataset out;
    out.time.reserve(rows.size());
    out.event.reserve(rows.size());
    out.covariates.resize(static_cast<Eigen::Index>(rows.size()), covariates.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.time.push_back(time[rows[r]]);
        out.event.push_back(event[rows[r]]);
        out.covariates.row(static_cast<Eigen::Index>(r)) = covariates.row(rows[r]);
    }
    return out;
}

ModelParams ModelParams::from_theta(Eigen::VectorXd beta, const Eigen::VectorXd& theta) {
    if ((theta.array() < 0.0).any()) throw std::invalid_argument("theta must be nonnegative");
    return {std::move(beta), theta.array().sqrt().matrix()};
}

LikelihoodEvaluator::LikelihoodEvaluator(const SurvivalDataset& data, const SplineSpec& spec)
    : spec_(spec), n_(data.size()), p_(data.n_covariates()), m_(spec.size()), x_(data.covariates) {
    mbasis_.resize(n_, m_);
    ibasis_.resize(n_, m_);
    delta_.resize(n_);
    for (int i = 0; i < n_; ++i) {
        delta_[i] = data.event[i] ? 1.0 : 0.0;
        mbasis_.row(i) = msplines_eval(spec, data.time[i]).transpose();
        ibasis_.row(i) = isplines_eval(spec, data.time[i]).transpose();
    }
}

void LikelihoodEvaluator::predictors(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta,
                                     Work& work) const {
    work.eta = Eigen::VectorXd::Zero(n_);
    work.cum = Eigen::VectorXd::Zero(n_);
    work.haz = Eigen::VectorXd::Zero(n_);
    for (int j = 0; j < p_; ++j) kernels::axpy(beta[j], col(x_, j), view(work.eta));
    for (int k = 0; k < m_; ++k) {
        kernels::axpy(theta[k], col(ibasis_, k), view(work.cum));
        kernels::axpy(theta[k], col(mbasis_, k), view(work.haz));
    }
    work.w = work.eta.array().exp().matrix();
}

double LikelihoodEvaluator::loglik(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta) const {
    Work work;
    predictors(beta, theta, work);
    double event_part = 0.0;
    for (int i = 0; i < n_; ++i) {
        if (delta_[i] == 0.0) continue;
        if (!(work.haz[i] > 0.0)) return -std::numeric_limits<double>::infinity();
        event_part += std::log(work.haz[i]) + work.eta[i];
    }
    return event_part - kernels::dot(view(work.w), view(work.cum));
}

LikelihoodEvaluator::Derivatives LikelihoodEvaluator::derivatives(const Eigen::VectorXd& beta,
                                                                  const Eigen::VectorXd& theta,
                                                                  bool with_hessian) const {
    Work work;
    predictors(beta, theta, work);
    Derivatives out;
    out.gradient.resize(p_ + m_);

    Eigen::VectorXd inv_haz = Eigen::VectorXd::Zero(n_);
    double event_part = 0.0;
    bool zero_hazard = false;
    for (int i = 0; i < n_; ++i) {
        if (delta_[i] == 0.0) continue;
        if (!(work.haz[i] > 0.0)) {
            zero_hazard = true;
            continue;
        }
        inv_haz[i] = 1.0 / work.haz[i];
        event_part += std::log(work.haz[i]) + work.eta[i];
    }
    out.loglik = zero_hazard ? -std::numeric_limits<double>::infinity()
                             : event_part - kernels::dot(view(work.w), view(work.cum));

    // w_i * H0(T_i): the cumulative-hazard weight of subject i.
    Eigen::VectorXd wcum(n_);
    kernels::hadamard(view(work.w), view(work.cum), view(wcum));

    for (int j = 0; j < p_; ++j)
        out.gradient[j] = kernels::dot(view(delta_), col(x_, j)) - kernels::dot(view(wcum), col(x_, j));
    for (int k = 0; k < m_; ++k)
        out.gradient[p_ + k] =
            kernels::dot(view(inv_haz), col(mbasis_, k)) - kernels::dot(view(work.w), col(ibasis_, k));

    if (!with_hessian) return out;

    Eigen::VectorXd inv_haz2(n_);
    kernels::hadamard(view(inv_haz), view(inv_haz), view(inv_haz2));
    const int d = p_ + m_;
    out.neg_hessian.resize(d, d);
    for (int j = 0; j < p_; ++j) {
        for (int l = 0; l <= j; ++l)
            out.neg_hessian(j, l) = kernels::wdot(view(wcum), col(x_, j), col(x_, l));
        for (int k = 0; k < m_; ++k)
            out.neg_hessian(p_ + k, j) = kernels::wdot(view(work.w), col(x_, j), col(ibasis_, k));
    }
    for (int k = 0; k < m_; ++k)
        for (int r = 0; r <= k; ++r)
            out.neg_hessian(p_ + k, p_ + r) = kernels::wdot(view(inv_haz2), col(mbasis_, k), col(mbasis_, r));
    out.neg_hessian.triangularView<Eigen::StrictlyUpper>() =
        out.neg_hessian.transpose().triangularView<Eigen::StrictlyUpper>();
    return out;
}

Eigen::MatrixXd LikelihoodEvaluator::scores(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta) const {
    Work work;
    predictors(beta, theta, work);
    Eigen::VectorXd inv_haz = Eigen::VectorXd::Zero(n_);
    for (int i = 0; i < n_; ++i)
        if (delta_[i] != 0.0 && work.haz[i] > 0.0) inv_haz[i] = 1.0 / work.haz[i];

    // beta_j: (delta_i - w_i H0_i) x_ij ; theta_k: delta_i M_ik / h0_i - w_i I_ik
    Eigen::VectorXd resid(n_);
    kernels::hadamard(view(work.w), view(work.cum), view(resid));
    resid = delta_ - resid;

    Eigen::MatrixXd s(n_, p_ + m_);
    Eigen::VectorXd tmp(n_);
    for (int j = 0; j < p_; ++j) kernels::hadamard(view(resid), col(x_, j), col(s, j));
    for (int k = 0; k < m_; ++k) {
        kernels::hadamard(view(inv_haz), col(mbasis_, k), col(s, p_ + k));
        kernels::hadamard(view(work.w), col(ibasis_, k), view(tmp));
        kernels::axpy(-1.0, view(std::as_const(tmp)), col(s, p_ + k));
    }
    return s;
}

double log_likelihood(const SurvivalDataset& data, const ModelParams& params, const SplineSpec& spec) {
    return LikelihoodEvaluator(data, spec).loglik(params.beta, params.theta());
}

double penalty_value(const ModelParams& params, const SplineSpec& spec) {
    const Eigen::VectorXd theta = params.theta();
    return theta.dot(penalty_matrix(spec) * theta);
}

double penalized_loglik(const SurvivalDataset& data, const ModelParams& params, const SplineSpec& spec,
                        double kappa) {
    if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be >= 0");
    const double ll = log_likelihood(data, params, spec);
    return kappa == 0.0 ? ll : ll - kappa * penalty_value(params, spec);
}

Eigen::VectorXd score_individual(const SurvivalDataset& data, int i, const ModelParams& params,
                                 const SplineSpec& spec) {
    if (i < 0 || i >= data.size()) throw std::out_of_range("subject index out of range");
    return LikelihoodEvaluator(data.subset({i}), spec).scores(params.beta, params.theta()).row(0).transpose();
}

Eigen::VectorXd penalty_gradient(const Eigen::VectorXd& theta, const SplineSpec& spec, int p, double kappa) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p + theta.size());
    if (kappa != 0.0) g.tail(theta.size()) = 2.0 * kappa * (penalty_matrix(spec) * theta);
    return g;
}

Eigen::VectorXd pl_gradient(const SurvivalDataset& data, const ModelParams& params, const SplineSpec& spec,
                            double kappa) {
    if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be >= 0");
    const Eigen::VectorXd theta = params.theta();
    const auto d = LikelihoodEvaluator(data, spec).derivatives(params.beta, theta, false);
    return d.gradient - penalty_gradient(theta, spec, data.n_covariates(), kappa);
}

Eigen::MatrixXd pl_hessian(const SurvivalDataset& data, const ModelParams& params, const SplineSpec& spec,
                           double kappa) {
    if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be >= 0");
    const Eigen::VectorXd theta = params.theta();
    auto d = LikelihoodEvaluator(data, spec).derivatives(params.beta, theta, true);
    const int m = spec.size();
    if (kappa != 0.0) d.neg_hessian.bottomRightCorner(m, m) += 2.0 * kappa * penalty_matrix(spec);
    return d.neg_hessian;
}

}  // namespace penhaz
