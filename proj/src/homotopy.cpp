#include "flowfilt/homotopy.hpp"

#include <cmath>
#include <utility>

#include <Eigen/Cholesky>

namespace flowfilt {

Schedule Schedule::power(double p) {
    if (!(p >= 1.0) || !std::isfinite(p)) {
        throw DomainError("schedule exponent must be a finite real >= 1");
    }
    return Schedule(Kind::power, p);
}

double Schedule::g(double gamma) const {
    switch (kind_) {
        case Kind::linear:
            return gamma;
        case Kind::power2:
            return gamma * gamma;
        case Kind::power:
            return std::pow(gamma, exponent_);
    }
    return gamma;
}

double Schedule::gdot(double gamma) const {
    switch (kind_) {
        case Kind::linear:
            return 1.0;
        case Kind::power2:
            return 2.0 * gamma;
        case Kind::power:
            if (exponent_ == 1.0) return 1.0;
            return exponent_ * std::pow(gamma, exponent_ - 1.0);
    }
    return 1.0;
}

LikelihoodModel LikelihoodModel::gaussianAdditive(MeasurementFn h, Vector measurement,
                                                  Matrix noise_cov, Schedule sched) {
    const Index p = measurement.size();
    if (noise_cov.rows() != p || noise_cov.cols() != p) {
        throw DimensionError("noise covariance does not match measurement dimension");
    }
    Eigen::LLT<Matrix> llt(noise_cov);
    if (llt.info() != Eigen::Success) {
        throw DomainError("noise covariance must be symmetric positive definite");
    }
    auto fn = [h = std::move(h), y = std::move(measurement), llt = std::move(llt),
               p](const Vector& x) -> double {
        Vector residual = y - h(x);
        if (residual.size() != p) {
            throw DimensionError("measurement function output does not match measurement");
        }
        // -1/2 r^T C^{-1} r via the Cholesky factor.
        Vector half = llt.matrixL().solve(residual);
        return -0.5 * half.squaredNorm();
    };
    return LikelihoodModel(std::move(fn), sched);
}

LikelihoodModel LikelihoodModel::fromLogLik(LogLikFn loglik, Schedule sched) {
    return LikelihoodModel(std::move(loglik), sched);
}

LikelihoodModel LikelihoodModel::flat(Schedule sched) {
    return LikelihoodModel([](const Vector&) { return 0.0; }, sched);
}

double LikelihoodModel::logLikGamma(const Vector& x, double gamma) const {
    return (sched_.g(gamma) - sched_.g(gamma_offset_)) * loglik_(x);
}

double LikelihoodModel::likGamma(const Vector& x, double gamma) const {
    return std::exp(logLikGamma(x, gamma));
}

double LikelihoodModel::dlikDgamma(const Vector& x, double gamma) const {
    const double l = loglik_(x);
    return l * sched_.gdot(gamma) * std::exp((sched_.g(gamma) - sched_.g(gamma_offset_)) * l);
}

double LikelihoodModel::logRatio(const Vector& x, double gamma) const {
    return loglik_(x) * sched_.gdot(gamma);
}

LikelihoodModel LikelihoodModel::effective(double gamma_star) const {
    if (gamma_star < 0.0 || gamma_star > 1.0) {
        throw DomainError("effective likelihood shift must lie in [0, 1]");
    }
    LikelihoodModel shifted(*this);
    shifted.gamma_offset_ = gamma_star;
    return shifted;
}

ReweightResult bayesReweight(const ParticleSet& prior, const LikelihoodModel& lik) {
    const Index L = prior.count();
    Vector loglik(L);
    for (Index i = 0; i < L; ++i) {
        loglik[i] = lik.logLik(prior.location(i));
    }
    const double shift = loglik.maxCoeff();
    if (!std::isfinite(shift)) {
        throw UpdateImpossibleError(
            "likelihood vanishes at every prior particle; measurement and prior are incompatible");
    }
    Vector w(L);
    for (Index i = 0; i < L; ++i) {
        w[i] = prior.weights()[i] * std::exp(loglik[i] - shift);
    }
    const double sum = w.sum();
    if (!(sum > 0.0)) {
        throw UpdateImpossibleError(
            "all posterior weights vanish; measurement and prior are incompatible");
    }
    w /= sum;
    ParticleSet posterior(prior.locations(), w);
    return ReweightResult{posterior, posterior.ess()};
}

} // namespace flowfilt
