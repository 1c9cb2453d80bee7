#include "penhaz/estimator.hpp"

#include "penhaz/errors.hpp"
#include "penhaz/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace penhaz {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// pL over x = (beta, zeta) with theta = zeta^2.
class ZetaObjective {
public:
    ZetaObjective(const LikelihoodEvaluator& model, double kappa)
        : model_(model), kappa_(kappa), p_(model.p()), m_(model.m()) {
        if (kappa_ > 0.0) omega_ = penalty_matrix(model.spec());
    }

    struct State {
        Eigen::VectorXd x;
        double value = -kInf;
        Eigen::VectorXd grad_theta;  // d pL / d(beta, theta)
        Eigen::VectorXd grad;        // d pL / d(beta, zeta)
        Eigen::MatrixXd neg_hess;    // -d2 pL / d(beta, zeta)2
    };

    double value(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd beta = x.head(p_);
        const Eigen::VectorXd theta = x.tail(m_).array().square().matrix();
        const double ll = model_.loglik(beta, theta);
        if (!std::isfinite(ll)) return -kInf;
        return kappa_ > 0.0 ? ll - kappa_ * theta.dot(omega_ * theta) : ll;
    }

    State evaluate(const Eigen::VectorXd& x) const {
        State s;
        s.x = x;
        const Eigen::VectorXd beta = x.head(p_);
        const Eigen::VectorXd zeta = x.tail(m_);
        const Eigen::VectorXd theta = zeta.array().square().matrix();
        auto d = model_.derivatives(beta, theta, true);
        if (!std::isfinite(d.loglik)) return s;
        s.value = d.loglik;
        s.grad_theta = d.gradient;
        Eigen::MatrixXd h = std::move(d.neg_hessian);
        if (kappa_ > 0.0) {
            const Eigen::VectorXd om_theta = omega_ * theta;
            s.value -= kappa_ * theta.dot(om_theta);
            s.grad_theta.tail(m_) -= 2.0 * kappa_ * om_theta;
            h.bottomRightCorner(m_, m_) += 2.0 * kappa_ * omega_;
        }
        // Chain rule through theta = zeta^2: J = diag(1_p, 2 zeta).
        Eigen::VectorXd jac = Eigen::VectorXd::Ones(p_ + m_);
        jac.tail(m_) = 2.0 * zeta;
        s.grad = jac.cwiseProduct(s.grad_theta);
        s.neg_hess = jac.asDiagonal() * h * jac.asDiagonal();
        s.neg_hess.diagonal().tail(m_) -= 2.0 * s.grad_theta.tail(m_);
        return s;
    }

private:
    const LikelihoodEvaluator& model_;
    double kappa_;
    int p_, m_;
    Eigen::MatrixXd omega_;
};

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

FitResult finalize(const LikelihoodEvaluator& model, double kappa, const Eigen::VectorXd& x,
                   const FitOptions& options) {
    const int p = model.p(), m = model.m();
    FitResult r;
    r.kappa = kappa;
    r.params.beta = x.head(p);
    r.params.zeta = x.tail(m);
    const Eigen::VectorXd theta = r.params.theta();
    auto d = model.derivatives(r.params.beta, theta, true);
    r.loglik = d.loglik;
    r.H_L = std::move(d.neg_hessian);
    r.H_pL = r.H_L;
    r.penalty_grad = Eigen::VectorXd::Zero(p + m);
    double pen = 0.0;
    if (kappa > 0.0) {
        const Eigen::MatrixXd& omega = penalty_matrix(model.spec());
        r.H_pL.bottomRightCorner(m, m) += 2.0 * kappa * omega;
        r.penalty_grad.tail(m) = 2.0 * kappa * (omega * theta);
        pen = kappa * theta.dot(omega * theta);
    }
    r.pen_loglik = r.loglik - pen;
    r.scores = model.scores(r.params.beta, theta);
    r.boundary_theta = options.boundary_theta;
    r.boundary = (theta.array() <= options.boundary_theta).any();
    r.lcv_a = std::numeric_limits<double>::quiet_NaN();
    r.edf = std::numeric_limits<double>::quiet_NaN();
    return r;
}

}  // namespace

std::vector<Eigen::Index> FitResult::free_coordinates() const {
    const Eigen::Index p = params.beta.size();
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < p; ++j) idx.push_back(j);
    for (Eigen::Index k = 0; k < params.zeta.size(); ++k)
        if (params.zeta[k] * params.zeta[k] > boundary_theta) idx.push_back(p + k);
    return idx;
}

ModelParams default_init(const SurvivalDataset& data, const SplineSpec& spec) {
    const int m = spec.size();
    const int n = data.size();
    const int d = data.n_events();
    // All I-splines equal 1 at the upper knot, so H0(max) = sum(theta).
    const double total = d > 0 ? static_cast<double>(d) / n : 1.0 / n;
    return ModelParams::from_theta(Eigen::VectorXd::Zero(data.n_covariates()),
                                   Eigen::VectorXd::Constant(m, total / m));
}

void check_design(const SurvivalDataset& data) {
    const int p = data.n_covariates();
    if (p == 0) return;
    if (data.size() <= p) throw SingularDesignError("fewer subjects than covariates + 1");
    // A constant column is confounded with the baseline level, so test the
    // centred design.
    const Eigen::MatrixXd centred = data.covariates.rowwise() - data.covariates.colwise().mean();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(centred);
    const double scale = std::max(1.0, centred.cwiseAbs().maxCoeff());
    qr.setThreshold(1e-10 * scale);
    if (qr.rank() < p) {
        std::ostringstream msg;
        msg << "covariate matrix is rank deficient (rank " << qr.rank() << " of " << p << ")";
        throw SingularDesignError(msg.str());
    }
}

FitResult fit_fixed_kappa(const SurvivalDataset& data, const SplineSpec& spec, double kappa,
                          const std::optional<ModelParams>& init, const FitOptions& options) {
    data.validate();
    check_design(data);
    const LikelihoodEvaluator model(data, spec);
    FitResult r = fit_fixed_kappa(model, kappa, init ? *init : default_init(data, spec), options);
    return r;
}

FitResult fit_fixed_kappa(const LikelihoodEvaluator& model, double kappa, const ModelParams& init,
                          const FitOptions& options) {
    if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be >= 0");
    const int p = model.p(), m = model.m(), d = p + m;
    if (init.beta.size() != p || init.zeta.size() != m)
        throw std::invalid_argument("initial parameters have the wrong dimension");

    const ZetaObjective objective(model, kappa);
    Eigen::VectorXd x(d);
    x << init.beta, init.zeta;
    auto cur = objective.evaluate(x);
    if (!std::isfinite(cur.value))
        throw std::invalid_argument("initial parameters give zero hazard at an event time");

    double last_dvalue = kInf, last_dx = kInf;
    bool converged = false;
    int revivals = 0;
    int iter = 0;
    for (; iter < options.max_iter; ++iter) {
        // theta_k = 0 is stationary in zeta; reopen coordinates whose theta
        // gradient says they should grow.
        if (revivals < 4 * m) {
            const double top = cur.x.tail(m).cwiseAbs2().maxCoeff();
            bool revived = false;
            for (int k = 0; k < m; ++k) {
                const double th = cur.x[p + k] * cur.x[p + k];
                if (th <= 1e-20 * (1.0 + top) &&
                    cur.grad_theta[p + k] > options.grad_tol * (1.0 + std::abs(cur.value))) {
                    x[p + k] = std::sqrt(1e-6 * std::max(top, 1e-12));
                    revived = true;
                    ++revivals;
                }
            }
            if (revived) {
                auto trial = objective.evaluate(x);
                if (std::isfinite(trial.value)) {
                    cur = std::move(trial);
                    last_dvalue = last_dx = kInf;
                } else {
                    x = cur.x;
                }
            }
        }

        const double scale = 1.0 + std::abs(cur.value);
        const double gnorm = inf_norm(cur.grad);
        if (gnorm <= options.grad_tol * scale && last_dvalue <= options.rel_value_tol &&
            last_dx <= options.rel_param_tol) {
            converged = true;
            break;
        }

        // Levenberg-Marquardt damped Newton ascent with backtracking.
        const Eigen::VectorXd diag = cur.neg_hess.diagonal().cwiseAbs().cwiseMax(1e-12);
        double mu = 0.0;
        bool accepted = false;
        Eigen::VectorXd x_new;
        double f_new = -kInf;
        for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
            Eigen::MatrixXd a = cur.neg_hess;
            a.diagonal() += mu * diag;
            Eigen::LLT<Eigen::MatrixXd> llt(a);
            if (llt.info() != Eigen::Success) {
                mu = mu == 0.0 ? 1e-8 : mu * 10.0;
                continue;
            }
            const Eigen::VectorXd step = llt.solve(cur.grad);
            const double slope = cur.grad.dot(step);
            double t = 1.0;
            for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
                x_new = cur.x + t * step;
                f_new = objective.value(x_new);
                if (std::isfinite(f_new) && f_new >= cur.value + 1e-4 * t * slope) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) mu = std::max(mu * 10.0, 1e-6);
        }
        if (!accepted) {
            // No ascent possible: either at the optimum up to rounding or stuck.
            converged = gnorm <= options.grad_tol * scale;
            break;
        }
        last_dvalue = std::abs(f_new - cur.value) / std::max(1.0, std::abs(f_new));
        last_dx = inf_norm(x_new - cur.x) / (1.0 + inf_norm(x_new));
        x = x_new;
        cur = objective.evaluate(x);
    }
    if (!converged && iter >= options.max_iter) {
        const double gnorm = inf_norm(cur.grad);
        converged = gnorm <= options.grad_tol * (1.0 + std::abs(cur.value)) &&
                    last_dvalue <= options.rel_value_tol && last_dx <= options.rel_param_tol;
    }

    FitResult r = finalize(model, kappa, cur.x, options);
    r.converged = converged;
    r.iterations = iter;
    r.grad_norm = inf_norm(cur.grad);
    if (converged && model.n() >= 2) {
        try {
            const double trace = lcv_trace_term(r);
            r.lcv_a = -r.loglik / model.n() + trace;
            r.edf = trace * model.n();
        } catch (const NumericalSingularityError&) {
        }
    }
    return r;
}

double lcv_trace_term(const FitResult& fit) {
    const auto n = fit.scores.rows();
    if (n < 2) throw std::invalid_argument("LCV_a needs at least two subjects");
    const auto idx = fit.free_coordinates();
    SymmetricInverse inv;
    try {
        inv = invert_spd(fit.H_pL(idx, idx), "H_pL");
    } catch (const IndefiniteMatrixError& e) {
        throw NumericalSingularityError(e.what(), kInf);
    }
    // n (n-1) K = S'S + (S'1) g'
    const Eigen::MatrixXd s = fit.scores(Eigen::all, idx);
    const Eigen::VectorXd g = fit.penalty_grad(idx);
    const Eigen::MatrixXd gram = column_gram(s);
    const Eigen::VectorXd score_sum = s.colwise().sum().transpose();
    const Eigen::MatrixXd k = (gram + score_sum * g.transpose()) / (static_cast<double>(n) * (n - 1));
    // The criterion is written for the per-observation Hessian H_pL / n.
    return static_cast<double>(n) * (inv.inverse * k).trace();
}

double lcv_a(const SurvivalDataset& data, const FitResult& fit) {
    if (!fit.converged) throw std::invalid_argument("lcv_a requires a converged fit");
    if (fit.scores.rows() != data.size()) throw std::invalid_argument("fit does not belong to this dataset");
    return -fit.loglik / data.size() + lcv_trace_term(fit);
}

KappaSearchResult select_kappa(const SurvivalDataset& data, const SplineSpec& spec,
                               const KappaSearchOptions& options) {
    if (!(options.kappa_lo > 0.0 && options.kappa_hi > options.kappa_lo))
        throw std::invalid_argument("kappa search needs 0 < kappa_lo < kappa_hi");
    if (options.grid_points < 2) throw std::invalid_argument("kappa grid needs at least 2 points");
    data.validate();
    check_design(data);
    const LikelihoodEvaluator model(data, spec);
    const ModelParams cold = default_init(data, spec);

    KappaSearchResult result;
    std::vector<std::pair<double, double>> curve;
    double best_lcv = kInf;
    double best_kappa = 0.0;
    std::optional<FitResult> best_fit;

    auto run = [&](double kappa, const ModelParams& start) -> std::optional<FitResult> {
        for (int tries = 0; tries < 2; ++tries) {
            const ModelParams& init = tries == 0 ? start : cold;
            try {
                FitResult f = fit_fixed_kappa(model, kappa, init, options.fit);
                if (f.converged && std::isfinite(f.lcv_a)) return f;
                std::ostringstream msg;
                msg << "kappa=" << kappa << ": " << (f.converged ? "singular H_pL" : "not converged")
                    << " after " << f.iterations << " iterations (grad " << f.grad_norm << ")";
                if (tries == 1) result.diagnostics.push_back(msg.str());
            } catch (const std::exception& e) {
                if (tries == 1) {
                    std::ostringstream msg;
                    msg << "kappa=" << kappa << ": " << e.what();
                    result.diagnostics.push_back(msg.str());
                }
            }
        }
        ++result.failed_fits;
        return std::nullopt;
    };
    auto record = [&](double kappa, std::optional<FitResult>&& f) -> double {
        if (!f) return kInf;
        const double v = f->lcv_a;
        curve.emplace_back(kappa, v);
        if (v < best_lcv || (v == best_lcv && kappa < best_kappa)) {
            best_lcv = v;
            best_kappa = kappa;
            best_fit = std::move(f);
        }
        return v;
    };

    const int g = options.grid_points;
    const double log_lo = std::log(options.kappa_lo), log_hi = std::log(options.kappa_hi);
    std::vector<double> grid(g);
    std::vector<double> grid_lcv(g, kInf);
    ModelParams warm = cold;
    for (int i = 0; i < g; ++i) {
        grid[i] = i == g - 1 ? options.kappa_hi : std::exp(log_lo + (log_hi - log_lo) * i / (g - 1));
        if (i == 0) grid[i] = options.kappa_lo;
        auto f = run(grid[i], warm);
        if (f) warm = f->params;
        grid_lcv[i] = record(grid[i], std::move(f));
    }
    if (!best_fit) {
        std::ostringstream msg;
        msg << "kappa selection failed: every fit failed";
        for (const auto& d : result.diagnostics) msg << "\n  " << d;
        throw SelectionFailureError(msg.str());
    }

    int imin = 0;
    for (int i = 1; i < g; ++i)
        if (grid_lcv[i] < grid_lcv[imin]) imin = i;
    result.at_boundary = imin == 0 || imin == g - 1;

    // Golden-section refinement in log kappa between the grid neighbours.
    double a = std::log(grid[std::max(imin - 1, 0)]);
    double b = std::log(grid[std::min(imin + 1, g - 1)]);
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    const double log_tol = std::log1p(options.refine_rel_width);
    const ModelParams refine_start = best_fit->params;
    auto eval_at = [&](double u) {
        const double kappa = std::exp(u);
        return record(kappa, run(kappa, best_fit ? best_fit->params : refine_start));
    };
    double c = b - ratio * (b - a), d = a + ratio * (b - a);
    double fc = eval_at(c), fd = eval_at(d);
    while (b - a > log_tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eval_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eval_at(d);
        }
    }

    std::sort(curve.begin(), curve.end());
    result.lcv_curve = std::move(curve);
    result.kappa_hat = best_kappa;
    result.fit = std::move(*best_fit);
    return result;
}

}  // namespace penhaz
