#include "oracles.hpp"

#include "penhaz/rng.hpp"
#include "penhaz/survival_model.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

using namespace penhaz;

namespace {

struct Config {
    SurvivalDataset data;
    SplineSpec spec;
    ModelParams params;
    double kappa;
};

// Random dataset, knots and strictly positive parameters.
Config random_config(RandomStream& rng) {
    const int n = 20 + static_cast<int>(rng.below(60));
    const int p = static_cast<int>(rng.below(3));
    std::vector<double> t(n);
    std::vector<std::uint8_t> e(n);
    Eigen::MatrixXd x(n, p);
    for (int i = 0; i < n; ++i) {
        t[i] = rng.uniform(1.0, 50.0);
        e[i] = rng.uniform() < 0.7;
        for (int j = 0; j < p; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
    }
    auto spec = make_knots(t, 3 + static_cast<int>(rng.below(5)));
    Eigen::VectorXd beta(p), theta(spec.size());
    for (auto& b : beta) b = rng.uniform(-0.5, 0.5);
    for (auto& th : theta) th = rng.uniform(0.05, 1.0);
    return {SurvivalDataset(t, e, x), spec, ModelParams::from_theta(beta, theta), rng.uniform(0.0, 50.0)};
}

Eigen::VectorXd xi_of(const ModelParams& p) {
    Eigen::VectorXd xi(p.dim());
    xi << p.beta, p.theta();
    return xi;
}

ModelParams params_of(const Eigen::VectorXd& xi, int p) {
    return ModelParams::from_theta(xi.head(p), xi.tail(xi.size() - p).cwiseMax(0.0));
}

}  // namespace

TEST_SUITE("survival_model") {

TEST_CASE("log-likelihood equals direct summation") {
    RandomStream rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const auto c = random_config(rng);
        const double ref = oracle::naive_loglik(c.data, c.params.beta, c.params.theta(), c.spec);
        CHECK(log_likelihood(c.data, c.params, c.spec) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("log-likelihood is additive over subjects") {
    RandomStream rng(2);
    for (int rep = 0; rep < 10; ++rep) {
        const auto c = random_config(rng);
        double sum = 0.0;
        for (int i = 0; i < c.data.size(); ++i) sum += log_likelihood(c.data.subset({i}), c.params, c.spec);
        CHECK(log_likelihood(c.data, c.params, c.spec) == doctest::Approx(sum).epsilon(1e-12));
    }
}

TEST_CASE("permuting subjects leaves L, gradient and Hessian unchanged") {
    RandomStream rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        const auto c = random_config(rng);
        std::vector<int> perm(c.data.size());
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        const auto shuffled = c.data.subset(perm);
        CHECK(log_likelihood(shuffled, c.params, c.spec) ==
              doctest::Approx(log_likelihood(c.data, c.params, c.spec)).epsilon(1e-12));
        const auto g1 = pl_gradient(c.data, c.params, c.spec, c.kappa);
        const auto g2 = pl_gradient(shuffled, c.params, c.spec, c.kappa);
        CHECK((g1 - g2).cwiseAbs().maxCoeff() <= 1e-10 * (1 + g1.cwiseAbs().maxCoeff()));
        const auto h1 = pl_hessian(c.data, c.params, c.spec, c.kappa);
        const auto h2 = pl_hessian(shuffled, c.params, c.spec, c.kappa);
        CHECK((h1 - h2).cwiseAbs().maxCoeff() <= 1e-10 * (1 + h1.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("analytic gradient matches central differences on 20 configurations") {
    RandomStream rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        const auto c = random_config(rng);
        const int p = c.data.n_covariates();
        const auto f = [&](const Eigen::VectorXd& xi) {
            return penalized_loglik(c.data, params_of(xi, p), c.spec, c.kappa);
        };
        const auto fd = oracle::fd_gradient(f, xi_of(c.params));
        const auto g = pl_gradient(c.data, c.params, c.spec, c.kappa);
        for (Eigen::Index j = 0; j < g.size(); ++j)
            CHECK(std::abs(g[j] - fd[j]) <= 1e-5 * std::max(1.0, std::abs(g[j])));
    }
}

TEST_CASE("analytic Hessian matches differences of the gradient") {
    RandomStream rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        const auto c = random_config(rng);
        const int p = c.data.n_covariates();
        const Eigen::VectorXd xi = xi_of(c.params);
        const auto h = pl_hessian(c.data, c.params, c.spec, c.kappa);
        for (Eigen::Index j = 0; j < xi.size(); ++j) {
            const auto gj = [&](const Eigen::VectorXd& v) {
                return pl_gradient(c.data, params_of(v, p), c.spec, c.kappa)[j];
            };
            const auto row = oracle::fd_gradient(gj, xi);
            for (Eigen::Index l = 0; l < xi.size(); ++l)
                CHECK(std::abs(-h(j, l) - row[l]) <= 1e-4 * std::max(1.0, std::abs(h(j, l))));
        }
    }
}

TEST_CASE("kappa enters the Hessian only through blockdiag(0, 2 kappa Omega)") {
    RandomStream rng(6);
    for (int rep = 0; rep < 10; ++rep) {
        const auto c = random_config(rng);
        const int p = c.data.n_covariates(), m = c.spec.size();
        const auto h0 = pl_hessian(c.data, c.params, c.spec, 0.0);
        const auto hk = pl_hessian(c.data, c.params, c.spec, c.kappa);
        Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(p + m, p + m);
        expected.bottomRightCorner(m, m) = 2.0 * c.kappa * penalty_matrix(c.spec);
        CHECK((hk - h0 - expected).cwiseAbs().maxCoeff() <= 1e-12 * (1 + hk.cwiseAbs().maxCoeff()));
        const auto pg = penalty_gradient(c.params.theta(), c.spec, p, c.kappa);
        const auto g0 = pl_gradient(c.data, c.params, c.spec, 0.0);
        const auto gk = pl_gradient(c.data, c.params, c.spec, c.kappa);
        CHECK((g0 - gk - pg).cwiseAbs().maxCoeff() <= 1e-10 * (1 + g0.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("individual scores sum to the likelihood gradient") {
    RandomStream rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        const auto c = random_config(rng);
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(c.params.dim());
        for (int i = 0; i < c.data.size(); ++i) sum += score_individual(c.data, i, c.params, c.spec);
        const auto g = pl_gradient(c.data, c.params, c.spec, 0.0);
        CHECK((sum - g).cwiseAbs().maxCoeff() <= 1e-10 * (1 + g.cwiseAbs().maxCoeff()));
        const LikelihoodEvaluator model(c.data, c.spec);
        const auto s = model.scores(c.params.beta, c.params.theta());
        for (int i = 0; i < c.data.size(); ++i)
            CHECK((s.row(i).transpose() - score_individual(c.data, i, c.params, c.spec)).cwiseAbs().maxCoeff() <=
                  1e-12 * (1 + s.row(i).cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("censored subject's theta score is -exp(X beta) I(T)") {
    const SurvivalDataset d({10.0, 20.0, 30.0}, {1, 0, 1}, Eigen::MatrixXd::Constant(3, 1, 0.5));
    const auto spec = make_knots(d.time, 4);
    const auto params = ModelParams::from_theta(Eigen::VectorXd::Constant(1, 0.3), Eigen::VectorXd::Constant(6, 0.2));
    const auto v = score_individual(d, 1, params, spec);
    const Eigen::VectorXd expected = -std::exp(0.15) * isplines_eval(spec, 20.0);
    CHECK((v.tail(6) - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("beta scores vanish when X = 0") {
    const SurvivalDataset d({5.0, 7.0, 9.0, 12.0}, {1, 1, 0, 1}, Eigen::MatrixXd::Zero(4, 2));
    const auto spec = make_knots(d.time, 3);
    const auto params = ModelParams::from_theta(Eigen::VectorXd::Constant(2, 0.7), Eigen::VectorXd::Constant(5, 0.3));
    const LikelihoodEvaluator model(d, spec);
    const auto s = model.scores(params.beta, params.theta());
    CHECK(s.leftCols(2).isZero());
}

TEST_CASE("zero hazard at an event time gives -infinity") {
    const SurvivalDataset d({1.0, 2.0, 3.0}, {1, 1, 1});
    const auto spec = make_knots(d.time, 3);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(spec.size());
    theta[spec.size() - 1] = 1.0;  // support only near the upper end
    const auto params = ModelParams::from_theta(Eigen::VectorXd(), theta);
    CHECK(log_likelihood(d, params, spec) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("penalized likelihood rejects negative kappa and subtracts kappa J") {
    RandomStream rng(8);
    const auto c = random_config(rng);
    CHECK_THROWS_AS(penalized_loglik(c.data, c.params, c.spec, -1.0), std::invalid_argument);
    const double j = penalty_value(c.params, c.spec);
    CHECK(j >= 0.0);
    CHECK(penalized_loglik(c.data, c.params, c.spec, 3.0) ==
          doctest::Approx(log_likelihood(c.data, c.params, c.spec) - 3.0 * j).epsilon(1e-14));
}

TEST_CASE("dataset validation") {
    CHECK_THROWS_AS(SurvivalDataset({1.0, -2.0}, {1, 1}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(SurvivalDataset({1.0, 2.0}, {1}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(SurvivalDataset({}, {}).validate(), std::invalid_argument);
    const SurvivalDataset ok({1.0, 2.0, 3.0}, {1, 0, 1});
    CHECK_NOTHROW(ok.validate());
    CHECK(ok.n_events() == 2);
}

}
