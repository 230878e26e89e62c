#include "flowfilt/kernels.hpp"

#include <cmath>

#include "flowfilt/errors.hpp"

namespace flowfilt {

double xlog(double z) {
    if (!(z >= 0.0)) {
        throw DomainError("xlog requires a nonnegative finite argument");
    }
    if (z == 0.0) {
        return 0.0;
    }
    return z * std::log(z);
}

Eigen::VectorXd plog(const Eigen::Ref<const Eigen::VectorXd>& z, double tol2) {
    const double n2 = z.squaredNorm();
    if (n2 <= tol2) {
        return Eigen::VectorXd::Zero(z.size());
    }
    return z * std::log(n2);
}

Eigen::MatrixXd logKernelBlock(const Eigen::Ref<const Eigen::VectorXd>& d) {
    const double n2 = d.squaredNorm();
    const Eigen::Index n = d.size();
    // Materialize the outer product before scaling; otherwise the scalar is
    // folded into one factor and the result is no longer bit-symmetric.
    Eigen::MatrixXd outer = d * d.transpose();
    return Eigen::MatrixXd(Eigen::MatrixXd::Identity(n, n) * std::log(n2) +
                           (2.0 / n2) * outer);
}

} // namespace flowfilt
