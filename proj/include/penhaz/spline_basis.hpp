#pragma once
// M-spline / I-spline bases on a clamped knot vector and the integrated
// squared second-derivative penalty of the M-spline expansion.

#include <Eigen/Core>

#include <span>
#include <string_view>
#include <vector>

namespace penhaz {

enum class KnotPlacement { Equal, Quantile };

std::string_view to_string(KnotPlacement placement);

/// Immutable after construction. `knots()` is the full clamped vector: each
/// boundary repeated `order` times, interior knots once, so that
/// size() == interior knots + order.
class SplineSpec {
public:
    SplineSpec(std::vector<double> distinct_knots, int order);

    const std::vector<double>& knots() const noexcept { return knots_; }
    const std::vector<double>& distinct_knots() const noexcept { return distinct_; }
    int order() const noexcept { return order_; }
    int size() const noexcept { return size_; }
    double lower() const noexcept { return distinct_.front(); }
    double upper() const noexcept { return distinct_.back(); }

    /// Second-derivative penalty; empty for order < 3.
    const Eigen::MatrixXd& omega() const noexcept { return omega_; }

    /// Index s of the knot interval [knots[s], knots[s+1]) holding t, with t
    /// clamped into [lower, upper]; the upper boundary maps to the last
    /// non-empty interval.
    int span_index(double t) const;

private:
    std::vector<double> distinct_;
    std::vector<double> knots_;
    int order_;
    int size_;
    Eigen::MatrixXd omega_;
};

/// `n_knots` distinct knots over [min(times), max(times)], boundaries
/// included, cubic (order 4) by default.
SplineSpec make_knots(std::span<const double> times, int n_knots,
                      KnotPlacement placement = KnotPlacement::Equal, int order = 4);

/// (M_1(t), ..., M_m(t)); zero outside [lower, upper].
Eigen::VectorXd msplines_eval(const SplineSpec& spec, double t);

/// (I_1(t), ..., I_m(t)) with I_k(t) = integral of M_k from lower to t.
Eigen::VectorXd isplines_eval(const SplineSpec& spec, double t);

/// Second derivatives of the M-splines at t (right-continuous at knots).
Eigen::VectorXd msplines_deriv2(const SplineSpec& spec, double t);

/// omega_kr = integral of M_k'' M_r''. Requires order >= 3.
Eigen::MatrixXd penalty_matrix(const SplineSpec& spec);

}  // namespace penhaz
