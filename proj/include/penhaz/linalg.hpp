#pragma once

#include <Eigen/Core>

#include <string>

namespace penhaz {

struct SymmetricInverse {
    Eigen::MatrixXd inverse;
    double condition = 0.0;
    double min_eigenvalue = 0.0;
};

/// Inverse of a symmetric positive definite matrix via its eigendecomposition.
/// Throws IndefiniteMatrixError if an eigenvalue is <= 0 and
/// NumericalSingularityError if the condition number exceeds max_condition.
SymmetricInverse invert_spd(const Eigen::MatrixXd& a, const std::string& label,
                            double max_condition = 1e14);

/// Inverse of a symmetric, possibly indefinite matrix. Throws
/// NumericalSingularityError when max|lambda| / min|lambda| exceeds
/// max_condition.
SymmetricInverse invert_symmetric(const Eigen::MatrixXd& a, const std::string& label,
                                  double max_condition = 1e14);

/// S'S for a column-major n x d matrix, accumulated with the active kernels.
Eigen::MatrixXd column_gram(const Eigen::MatrixXd& s);

}  // namespace penhaz
