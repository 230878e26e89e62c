#ifndef FLOWFILT_KERNELS_HPP
#define FLOWFILT_KERNELS_HPP

#include <Eigen/Dense>

namespace flowfilt {

// z * log(z) for z > 0, continuously extended with xlog(0) = 0. The zero
// case carries the self-terms of the pairwise distance sums.
// Throws DomainError for z < 0 or non-finite z.
double xlog(double z);

// plog(z) = z * log(z^T z), with plog(0) = 0. Vectors whose squared norm is
// below `tol2` are treated as zero (near-coincident particle pairs).
Eigen::VectorXd plog(const Eigen::Ref<const Eigen::VectorXd>& z,
                     double tol2 = 0.0);

// Second-derivative kernel of the xlog pair term:
//   I * log(||d||^2) + 2 d d^T / ||d||^2 .
// Undefined at d = 0; callers must guard coincident pairs.
Eigen::MatrixXd logKernelBlock(const Eigen::Ref<const Eigen::VectorXd>& d);

// Compensated (Kahan) accumulator. The distance is a difference of large
// pairwise sums, and the finite-difference checks notice naive accumulation
// for large L*M.
class KahanSum {
public:
    void add(double x) {
        double y = x - c_;
        double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

} // namespace flowfilt

#endif
