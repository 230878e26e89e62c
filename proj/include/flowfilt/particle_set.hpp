#ifndef FLOWFILT_PARTICLE_SET_HPP
#define FLOWFILT_PARTICLE_SET_HPP

#include <Eigen/Dense>

#include "flowfilt/errors.hpp"

namespace flowfilt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Weighted Dirac mixture: L locations in R^N plus a weight per location.
// Immutable once constructed. Construction enforces:
//   - L >= 1, N >= 1, all locations finite,
//   - all weights strictly positive,
//   - weights sum to 1 within 1e-12.
// Weights below 1e-300 are clamped and the vector renormalized so that
// log-weight ratios stay finite downstream.
class ParticleSet {
public:
    static constexpr double kWeightSumTol = 1e-12;
    static constexpr double kWeightFloor = 1e-300;

    // locations: L x N (one particle per row), weights: length L.
    ParticleSet(Matrix locations, Vector weights);

    // Trivial set: one particle at the 1D origin. Exists so that aggregates
    // holding a ParticleSet stay default-constructible.
    ParticleSet() : locations_(Matrix::Zero(1, 1)), weights_(Vector::Ones(1)) {}

    // Equal weights 1/L.
    static ParticleSet equalWeights(Matrix locations);

    Index count() const { return locations_.rows(); }
    Index dim() const { return locations_.cols(); }

    const Matrix& locations() const { return locations_; }
    const Vector& weights() const { return weights_; }

    Vector location(Index i) const { return locations_.row(i).transpose(); }

    // Weighted sample mean sum_i w_i x_i.
    Vector mean() const;
    // Weighted sample covariance sum_i w_i (x_i - m)(x_i - m)^T.
    Matrix covariance() const;
    // Effective sample size 1 / sum_i w_i^2, in [1, L].
    double ess() const;

    bool hasEqualWeights(double tol = 1e-12) const;

private:
    Matrix locations_;
    Vector weights_;
};

struct ReweightResult {
    ParticleSet posterior;
    double effective_sample_size;
};

} // namespace flowfilt

#endif
