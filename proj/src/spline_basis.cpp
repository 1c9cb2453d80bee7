#include "penhaz/spline_basis.hpp"

#include "penhaz/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace penhaz {
namespace {

// Nonzero normalized B-splines of degree `degree` at u on knot vector U, span s:
// out[j] = N_{s-degree+j}(u), j = 0..degree.
void basis_funs(const std::vector<double>& U, int s, double u, int degree, double* out) {
    std::array<double, 16> left{}, right{};
    out[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[j] = u - U[s + 1 - j];
        right[j] = U[s + j] - u;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

// Derivatives up to `nder` of the nonzero B-splines (Piegl & Tiller A2.3).
// ders[k][j] = d^k/du^k N_{s-degree+j}(u).
std::vector<std::vector<double>> ders_basis_funs(const std::vector<double>& U, int s, double u,
                                                 int degree, int nder) {
    const int p = degree;
    std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1));
    std::vector<double> left(p + 1), right(p + 1);
    ndu[0][0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = u - U[s + 1 - j];
        right[j] = U[s + j] - u;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    std::vector<std::vector<double>> ders(nder + 1, std::vector<double>(p + 1, 0.0));
    for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];

    std::vector<std::vector<double>> a(2, std::vector<double>(p + 1));
    for (int r = 0; r <= p; ++r) {
        int s1 = 0, s2 = 1;
        a[0][0] = 1.0;
        for (int k = 1; k <= nder; ++k) {
            double d = 0.0;
            const int rk = r - k, pk = p - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::swap(s1, s2);
        }
    }
    double factor = p;
    for (int k = 1; k <= nder; ++k) {
        for (int j = 0; j <= p; ++j) ders[k][j] *= factor;
        factor *= (p - k);
    }
    return ders;
}

Eigen::MatrixXd compute_omega(const SplineSpec& spec) {
    const int m = spec.size();
    const int k = spec.order();
    const auto& t = spec.knots();
    // Integrand is piecewise polynomial of degree 2(k-3); three Gauss points
    // integrate it exactly for cubic splines.
    const std::array<double, 3> nodes{-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    const std::array<double, 3> weights{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(m, m);
    for (int s = k - 1; s < m; ++s) {
        const double a = t[s], b = t[s + 1];
        if (!(b > a)) continue;
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        for (int q = 0; q < 3; ++q) {
            const double u = mid + half * nodes[q];
            const auto ders = ders_basis_funs(t, s, u, k - 1, 2);
            std::array<double, 16> d2{};
            for (int j = 0; j < k; ++j) {
                const int idx = s - k + 1 + j;
                d2[j] = ders[2][j] * k / (t[idx + k] - t[idx]);
            }
            const double w = weights[q] * half;
            for (int j = 0; j < k; ++j)
                for (int l = 0; l <= j; ++l)
                    omega(s - k + 1 + j, s - k + 1 + l) += w * d2[j] * d2[l];
        }
    }
    omega.triangularView<Eigen::StrictlyUpper>() = omega.transpose();
    return omega;
}

}  // namespace

std::string_view to_string(KnotPlacement placement) {
    return placement == KnotPlacement::Equal ? "equal" : "quantile";
}

SplineSpec::SplineSpec(std::vector<double> distinct_knots, int order)
    : distinct_(std::move(distinct_knots)), order_(order) {
    if (order_ < 1 || order_ > 12) throw UnsupportedOrderError("spline order must be in [1, 12]");
    if (distinct_.size() < 2) throw DegenerateDomainError("need at least two distinct knots");
    for (std::size_t i = 1; i < distinct_.size(); ++i)
        if (!(distinct_[i] > distinct_[i - 1]) || !std::isfinite(distinct_[i]))
            throw DegenerateDomainError("knots must be finite and strictly increasing");

    knots_.assign(order_, distinct_.front());
    knots_.insert(knots_.end(), distinct_.begin() + 1, distinct_.end() - 1);
    knots_.insert(knots_.end(), order_, distinct_.back());
    size_ = static_cast<int>(distinct_.size()) - 2 + order_;
    if (order_ >= 3) omega_ = compute_omega(*this);
}

int SplineSpec::span_index(double t) const {
    const double u = std::clamp(t, lower(), upper());
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), u);
    const int s = static_cast<int>(it - knots_.begin()) - 1;
    return std::clamp(s, order_ - 1, size_ - 1);
}

SplineSpec make_knots(std::span<const double> times, int n_knots, KnotPlacement placement, int order) {
    if (times.empty()) throw std::invalid_argument("make_knots: empty time sample");
    if (n_knots < 2) throw std::invalid_argument("make_knots: n_knots must be >= 2");
    const auto [lo_it, hi_it] = std::minmax_element(times.begin(), times.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) throw DegenerateDomainError("make_knots: fewer than 2 distinct time values");

    std::vector<double> knots(n_knots);
    if (placement == KnotPlacement::Equal) {
        const double step = (hi - lo) / (n_knots - 1);
        for (int j = 0; j < n_knots; ++j) knots[j] = lo + step * j;
    } else {
        std::vector<double> sorted(times.begin(), times.end());
        std::sort(sorted.begin(), sorted.end());
        const double last = static_cast<double>(sorted.size() - 1);
        for (int j = 0; j < n_knots; ++j) {
            const double pos = last * j / (n_knots - 1);
            const auto below = static_cast<std::size_t>(std::floor(pos));
            const auto above = std::min(below + 1, sorted.size() - 1);
            knots[j] = sorted[below] + (pos - below) * (sorted[above] - sorted[below]);
        }
        for (int j = 1; j < n_knots; ++j)
            if (!(knots[j] > knots[j - 1]))
                throw DegenerateDomainError("make_knots: quantile knots are not distinct");
    }
    knots.front() = lo;
    knots.back() = hi;
    return SplineSpec(std::move(knots), order);
}

Eigen::VectorXd msplines_eval(const SplineSpec& spec, double t) {
    const int m = spec.size(), k = spec.order();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
    if (!(t >= spec.lower() && t <= spec.upper())) return out;
    const auto& knots = spec.knots();
    const int s = spec.span_index(t);
    std::array<double, 16> n{};
    basis_funs(knots, s, t, k - 1, n.data());
    for (int j = 0; j < k; ++j) {
        const int idx = s - k + 1 + j;
        out[idx] = n[j] * k / (knots[idx + k] - knots[idx]);
    }
    return out;
}

Eigen::VectorXd isplines_eval(const SplineSpec& spec, double t) {
    const int m = spec.size(), k = spec.order();
    if (t <= spec.lower()) return Eigen::VectorXd::Zero(m);
    if (t >= spec.upper()) return Eigen::VectorXd::Ones(m);

    // Order k+1 B-splines on the knot vector padded by one extra boundary
    // knot at each end. I_i(t) = sum_{j >= i} N^{(k+1)}_{j+1}(t).
    const auto& knots = spec.knots();
    std::vector<double> tau;
    tau.reserve(knots.size() + 2);
    tau.push_back(knots.front());
    tau.insert(tau.end(), knots.begin(), knots.end());
    tau.push_back(knots.back());

    const int s = spec.span_index(t) + 1;
    std::array<double, 17> n{};
    basis_funs(tau, s, t, k, n.data());

    Eigen::VectorXd out(m);
    const int first = s - k;  // index in tau-basis of n[0]
    for (int i = 0; i < m; ++i) {
        const int j0 = i + 1;
        if (j0 <= first) {
            out[i] = 1.0;
        } else if (j0 > s) {
            out[i] = 0.0;
        } else {
            double acc = 0.0;
            for (int j = s; j >= j0; --j) acc += n[j - first];
            out[i] = std::min(1.0, acc);
        }
    }
    return out;
}

Eigen::VectorXd msplines_deriv2(const SplineSpec& spec, double t) {
    const int m = spec.size(), k = spec.order();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
    if (!(t >= spec.lower() && t <= spec.upper()) || k < 3) return out;
    const auto& knots = spec.knots();
    const int s = spec.span_index(t);
    const auto ders = ders_basis_funs(knots, s, t, k - 1, 2);
    for (int j = 0; j < k; ++j) {
        const int idx = s - k + 1 + j;
        out[idx] = ders[2][j] * k / (knots[idx + k] - knots[idx]);
    }
    return out;
}

Eigen::MatrixXd penalty_matrix(const SplineSpec& spec) {
    if (spec.order() < 3)
        throw UnsupportedOrderError("penalty_matrix: order " + std::to_string(spec.order()) +
                                    " has no square-integrable second derivative");
    return spec.omega();
}

}  // namespace penhaz
