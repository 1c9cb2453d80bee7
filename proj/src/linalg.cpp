#include "penhaz/linalg.hpp"

#include "penhaz/errors.hpp"
#include "penhaz/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace penhaz {

SymmetricInverse invert_spd(const Eigen::MatrixXd& a, const std::string& label, double max_condition) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    if (eig.info() != Eigen::Success)
        throw NumericalSingularityError(label + ": eigendecomposition failed",
                                        std::numeric_limits<double>::infinity());
    const Eigen::VectorXd& lambda = eig.eigenvalues();  // ascending
    SymmetricInverse out;
    out.min_eigenvalue = lambda[0];
    const double top = lambda[lambda.size() - 1];
    if (!(lambda[0] > 0.0)) {
        std::ostringstream msg;
        msg << label << " is not positive definite (smallest eigenvalue " << lambda[0] << ")";
        throw IndefiniteMatrixError(msg.str(), lambda[0]);
    }
    out.condition = top / lambda[0];
    if (!(out.condition <= max_condition)) {
        std::ostringstream msg;
        msg << label << " is numerically singular (condition number " << out.condition << ")";
        throw NumericalSingularityError(msg.str(), out.condition);
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    out.inverse = v * lambda.cwiseInverse().asDiagonal() * v.transpose();
    out.inverse = 0.5 * (out.inverse + out.inverse.transpose()).eval();
    return out;
}

SymmetricInverse invert_symmetric(const Eigen::MatrixXd& a, const std::string& label, double max_condition) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    if (eig.info() != Eigen::Success)
        throw NumericalSingularityError(label + ": eigendecomposition failed",
                                        std::numeric_limits<double>::infinity());
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const Eigen::VectorXd mag = lambda.cwiseAbs();
    SymmetricInverse out;
    out.min_eigenvalue = lambda[0];
    out.condition = mag.minCoeff() > 0.0 ? mag.maxCoeff() / mag.minCoeff()
                                         : std::numeric_limits<double>::infinity();
    if (!(out.condition <= max_condition)) {
        std::ostringstream msg;
        msg << label << " is numerically singular (condition number " << out.condition << ")";
        throw NumericalSingularityError(msg.str(), out.condition);
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    out.inverse = v * lambda.cwiseInverse().asDiagonal() * v.transpose();
    out.inverse = 0.5 * (out.inverse + out.inverse.transpose()).eval();
    return out;
}

Eigen::MatrixXd column_gram(const Eigen::MatrixXd& s) {
    const auto n = static_cast<std::size_t>(s.rows());
    const auto d = s.cols();
    Eigen::MatrixXd g(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index l = 0; l <= j; ++l) {
            const double v = kernels::active().dot(s.col(j).data(), s.col(l).data(), n);
            g(j, l) = v;
            g(l, j) = v;
        }
    return g;
}

}  // namespace penhaz
