#include "penhaz/variance.hpp"

#include "penhaz/errors.hpp"
#include "penhaz/linalg.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace penhaz {
namespace {

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& bread_inv, const Eigen::MatrixXd& meat) {
    Eigen::MatrixXd v = bread_inv * meat * bread_inv;
    return 0.5 * (v + v.transpose());
}

// Scatter a covariance over the free coordinates back to full size; rows and
// columns of boundary coordinates stay zero.
Eigen::MatrixXd embed(const Eigen::MatrixXd& v, const std::vector<Eigen::Index>& idx, Eigen::Index dim) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
    out(idx, idx) = v;
    return out;
}

void check_times(const SplineSpec& spec, std::span<const double> times) {
    for (double t : times) {
        // Below the first knot the baseline hazard is zero and S = 1, so only
        // the upper end of the knot range is a hard limit.
        if (!(t >= 0.0 && t <= spec.upper())) {
            std::ostringstream msg;
            msg << "time " << t << " lies outside [0, " << spec.upper() << "]";
            throw OutOfRangeError(msg.str());
        }
    }
}

Eigen::MatrixXd theta_block(const FitResult& fit, const VarianceEstimate& var) {
    const int p = fit.n_covariates();
    const int m = static_cast<int>(fit.params.zeta.size());
    if (var.matrix.rows() != p + m) throw std::invalid_argument("variance does not match the fit");
    return var.matrix.block(p, p, m, m);
}

}  // namespace

std::string_view to_string(VarianceMethod method) {
    switch (method) {
        case VarianceMethod::Bayes: return "bayes";
        case VarianceMethod::SandwichPenalized: return "sandwich";
        case VarianceMethod::SandwichNonPenalized: return "np-sandwich";
    }
    return "unknown";
}

std::optional<VarianceMethod> parse_variance_method(std::string_view name) {
    if (name == "bayes") return VarianceMethod::Bayes;
    if (name == "sandwich") return VarianceMethod::SandwichPenalized;
    if (name == "np-sandwich") return VarianceMethod::SandwichNonPenalized;
    return std::nullopt;
}

VarianceEstimate var_bayes(const FitResult& fit) {
    const auto idx = fit.free_coordinates();
    const auto inv = invert_spd(fit.H_pL(idx, idx), "H_pL");
    return {VarianceMethod::Bayes, embed(inv.inverse, idx, fit.H_pL.rows()), inv.condition};
}

VarianceEstimate var_sandwich(const FitResult& fit, bool penalized) {
    const auto idx = fit.free_coordinates();
    const Eigen::Index dim = fit.H_pL.rows();
    const Eigen::MatrixXd scores = fit.scores(Eigen::all, idx);
    const Eigen::MatrixXd gram = column_gram(scores);
    if (!penalized) {
        const auto inv = invert_symmetric(fit.H_L(idx, idx), "H_L");
        return {VarianceMethod::SandwichNonPenalized, embed(sandwich(inv.inverse, gram), idx, dim), inv.condition};
    }
    // sum (v_i + g)(v_i + g)' = S'S + s g' + g s' + n g g', s = sum v_i
    const Eigen::VectorXd g = fit.penalty_grad(idx);
    const Eigen::VectorXd s = scores.colwise().sum().transpose();
    const double n = static_cast<double>(scores.rows());
    Eigen::MatrixXd meat = gram;
    if (g.size() && g.cwiseAbs().maxCoeff() > 0.0)
        meat += s * g.transpose() + g * s.transpose() + n * g * g.transpose();
    const auto inv = invert_symmetric(fit.H_pL(idx, idx), "H_pL");
    return {VarianceMethod::SandwichPenalized, embed(sandwich(inv.inverse, meat), idx, dim), inv.condition};
}

VarianceEstimate estimate_variance(const FitResult& fit, VarianceMethod method) {
    switch (method) {
        case VarianceMethod::Bayes: return var_bayes(fit);
        case VarianceMethod::SandwichPenalized: return var_sandwich(fit, true);
        case VarianceMethod::SandwichNonPenalized: return var_sandwich(fit, false);
    }
    throw std::invalid_argument("unknown variance method");
}

double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double two_sided_z(double level) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must be in (0, 1)");
    return normal_quantile(0.5 + 0.5 * level);
}

std::vector<double> linspace(double lo, double hi, int count) {
    if (count < 2) throw std::invalid_argument("linspace needs at least two points");
    std::vector<double> out(count);
    const double step = (hi - lo) / (count - 1);
    for (int i = 0; i < count; ++i) out[i] = lo + step * i;
    out.back() = hi;
    return out;
}

CurveBand hazard_band(const FitResult& fit, const VarianceEstimate& var, const SplineSpec& spec,
                      std::span<const double> times, double level) {
    check_times(spec, times);
    const double z = two_sided_z(level);
    const Eigen::MatrixXd v = theta_block(fit, var);
    const Eigen::VectorXd theta = fit.theta();

    CurveBand band;
    band.level = level;
    band.boundary_suspect = fit.boundary;
    band.times.assign(times.begin(), times.end());
    for (double t : times) {
        const Eigen::VectorXd basis = msplines_eval(spec, t);
        const double est = theta.dot(basis);
        const double sd = std::sqrt(std::max(0.0, basis.dot(v * basis)));
        double lo = est - z * sd;
        if (lo < 0.0) {
            lo = 0.0;
            band.truncated = true;
        }
        band.estimate.push_back(est);
        band.sd.push_back(sd);
        band.lower.push_back(lo);
        band.upper.push_back(est + z * sd);
    }
    return band;
}

Eigen::VectorXd survival_gradient(const Eigen::VectorXd& theta, const SplineSpec& spec, double t) {
    const Eigen::VectorXd ib = isplines_eval(spec, t);
    return -ib * std::exp(-theta.dot(ib));
}

CurveBand survival_band(const FitResult& fit, const VarianceEstimate& var, const SplineSpec& spec,
                        std::span<const double> times, double level) {
    check_times(spec, times);
    const double z = two_sided_z(level);
    const Eigen::MatrixXd v = theta_block(fit, var);
    const Eigen::VectorXd theta = fit.theta();

    CurveBand band;
    band.level = level;
    band.boundary_suspect = fit.boundary;
    band.times.assign(times.begin(), times.end());
    for (double t : times) {
        const Eigen::VectorXd ib = isplines_eval(spec, t);
        const double est = std::exp(-theta.dot(ib));
        const Eigen::VectorXd grad = -ib * est;
        const double sd = std::sqrt(std::max(0.0, grad.dot(v * grad)));
        double lo = est - z * sd, hi = est + z * sd;
        if (lo < 0.0) {
            lo = 0.0;
            band.truncated = true;
        }
        if (hi > 1.0) {
            hi = 1.0;
            band.truncated = true;
        }
        band.estimate.push_back(est);
        band.sd.push_back(sd);
        band.lower.push_back(lo);
        band.upper.push_back(hi);
    }
    return band;
}

std::vector<CoefficientInterval> beta_intervals(const FitResult& fit, const VarianceEstimate& var,
                                                double level) {
    const int p = fit.n_covariates();
    if (p == 0) throw NoCovariatesError("beta_intervals: model has no covariates");
    const double z = two_sided_z(level);
    std::vector<CoefficientInterval> out(p);
    for (int j = 0; j < p; ++j) {
        auto& ci = out[j];
        ci.estimate = fit.params.beta[j];
        ci.sd = std::sqrt(std::max(0.0, var.matrix(j, j)));
        ci.lower = ci.estimate - z * ci.sd;
        ci.upper = ci.estimate + z * ci.sd;
    }
    return out;
}

}  // namespace penhaz
