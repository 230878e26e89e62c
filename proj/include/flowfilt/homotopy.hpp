#ifndef FLOWFILT_HOMOTOPY_HPP
#define FLOWFILT_HOMOTOPY_HPP

#include <functional>
#include <memory>

#include "flowfilt/particle_set.hpp"

namespace flowfilt {

// Progression schedule g: [0,1] -> [0,1], monotone, g(0)=0, g(1)=1.
// Controls how fast measurement information enters the flow.
class Schedule {
public:
    enum class Kind { linear, power2, power };

    static Schedule linear() { return Schedule(Kind::linear, 1.0); }
    static Schedule power2() { return Schedule(Kind::power2, 2.0); }
    static Schedule power(double p);

    double g(double gamma) const;
    double gdot(double gamma) const;

    Kind kind() const { return kind_; }
    double exponent() const { return exponent_; }

private:
    Schedule(Kind k, double p) : kind_(k), exponent_(p) {}
    Kind kind_;
    double exponent_;
};

using LogLikFn = std::function<double(const Vector&)>;
using MeasurementFn = std::function<Vector(const Vector&)>;

// Likelihood with its homotopy over artificial time gamma:
//   log f_L(x, gamma) = (g(gamma) - g(gamma_offset)) * loglik(x).
// gamma_offset = 0 for a plain model; effective() shifts the offset so the
// model is flat at the shift point (remaining-likelihood construction of
// the recursive flow). All arithmetic stays in log space.
class LikelihoodModel {
public:
    // Unnormalized Gaussian likelihood for y = h(x) + v, v ~ N(0, cov):
    // loglik(x) = -1/2 (y - h(x))^T cov^{-1} (y - h(x)).
    static LikelihoodModel gaussianAdditive(MeasurementFn h, Vector measurement,
                                            Matrix noise_cov,
                                            Schedule sched = Schedule::linear());

    // User-supplied log-likelihood; no normalization required.
    static LikelihoodModel fromLogLik(LogLikFn loglik,
                                      Schedule sched = Schedule::linear());

    // Flat likelihood (loglik identically 0).
    static LikelihoodModel flat(Schedule sched = Schedule::linear());

    // Base log-likelihood log f_L(x) (the gamma = 1 likelihood, up to the
    // offset), unnormalized.
    double logLik(const Vector& x) const { return loglik_(x); }

    // log f_L(x, gamma) under the homotopy.
    double logLikGamma(const Vector& x, double gamma) const;

    // f_L(x, gamma); equals 1 at gamma = gamma_offset.
    double likGamma(const Vector& x, double gamma) const;

    // d f_L(x, gamma) / d gamma = loglik(x) * gdot(gamma) * f_L(x, gamma).
    double dlikDgamma(const Vector& x, double gamma) const;

    // The ratio fdot_L / f_L = loglik(x) * gdot(gamma), formed symbolically.
    // This is the only likelihood quantity the flow consumes.
    double logRatio(const Vector& x, double gamma) const;

    // Effective likelihood f_L(x, gamma) / f_L(x, gamma_star): information
    // up to gamma_star has already been absorbed.
    LikelihoodModel effective(double gamma_star) const;

    const Schedule& schedule() const { return sched_; }
    double gammaOffset() const { return gamma_offset_; }

private:
    LikelihoodModel(LogLikFn f, Schedule s) : loglik_(std::move(f)), sched_(s) {}
    LogLikFn loglik_;
    Schedule sched_;
    double gamma_offset_ = 0.0;
};

// One-shot Bayes update of the mixture weights: posterior weights
// proportional to w_i * f_L(x_i), locations unchanged. Computed in log
// space. Throws UpdateImpossibleError when every likelihood value vanishes.
ReweightResult bayesReweight(const ParticleSet& prior, const LikelihoodModel& lik);

} // namespace flowfilt

#endif
