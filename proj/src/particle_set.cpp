#include "flowfilt/particle_set.hpp"

#include <cmath>

namespace flowfilt {

ParticleSet::ParticleSet(Matrix locations, Vector weights)
    : locations_(std::move(locations)), weights_(std::move(weights)) {
    const Index L = locations_.rows();
    const Index N = locations_.cols();
    if (L < 1 || N < 1) {
        throw DomainError("particle set needs at least one particle and one dimension");
    }
    if (weights_.size() != L) {
        throw DimensionError("weight count does not match particle count");
    }
    if (!locations_.allFinite()) {
        throw DomainError("particle locations must be finite");
    }
    for (Index i = 0; i < L; ++i) {
        if (weights_[i] < 0.0 || !std::isfinite(weights_[i])) {
            throw DomainError("particle weights must be nonnegative and finite");
        }
    }
    const double sum = weights_.sum();
    if (std::abs(sum - 1.0) > kWeightSumTol) {
        throw DomainError("particle weights must sum to 1 (got " + std::to_string(sum) + ")");
    }
    // Clamp vanishing weights so strict positivity holds and downstream
    // log-weight ratios stay finite.
    bool clamped = false;
    for (Index i = 0; i < L; ++i) {
        if (weights_[i] < kWeightFloor) {
            weights_[i] = kWeightFloor;
            clamped = true;
        }
    }
    if (clamped) {
        weights_ /= weights_.sum();
    }
}

ParticleSet ParticleSet::equalWeights(Matrix locations) {
    const Index L = locations.rows();
    if (L < 1) {
        throw DomainError("particle set needs at least one particle");
    }
    return ParticleSet(std::move(locations), Vector::Constant(L, 1.0 / static_cast<double>(L)));
}

Vector ParticleSet::mean() const {
    return locations_.transpose() * weights_;
}

Matrix ParticleSet::covariance() const {
    const Vector m = mean();
    Matrix centered = locations_.rowwise() - m.transpose();
    return centered.transpose() * weights_.asDiagonal() * centered;
}

double ParticleSet::ess() const {
    return 1.0 / weights_.squaredNorm();
}

bool ParticleSet::hasEqualWeights(double tol) const {
    const double w = 1.0 / static_cast<double>(count());
    return (weights_.array() - w).abs().maxCoeff() <= tol;
}

} // namespace flowfilt
