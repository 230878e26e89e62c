#ifndef FLOWFILT_FLOW_HPP
#define FLOWFILT_FLOW_HPP

#include <utility>
#include <vector>

#include "flowfilt/distance.hpp"
#include "flowfilt/homotopy.hpp"

namespace flowfilt {

enum class FlowVariant { recursive, iterative };
enum class FlowIntegrator { fixed_rk4, adaptive_heun };

struct FlowConfig {
    FlowVariant variant = FlowVariant::recursive;
    FlowIntegrator integrator = FlowIntegrator::fixed_rk4;
    int step_count = 64;      // fixed_rk4
    double tolerance = 1e-6;  // adaptive_heun, relative
    // Levenberg damping of the Hessian solve. Negative means automatic:
    // max(0.0035 * k2 / L, 0.2 * max|H_ij|), a floor calibrated on
    // linear-Gaussian oracles plus a state-dependent scale that keeps the
    // solve smooth when the log-kernel blocks grow large.
    double damping = -1.0;
    DistanceParams params{};
    bool trace = false;
};

struct FlowStepDiag {
    double gamma;
    double grad_norm;      // norm of the gamma-derivative J at the stage
    double damping;        // lambda actually used in the solve
    double step_size;
    double cond_estimate;  // rough Hessian condition estimate from the solve
};

struct FlowTrace {
    std::vector<std::pair<double, ParticleSet>> snapshots; // (gamma, set)
    std::vector<FlowStepDiag> steps;
};

struct FlowResult {
    ParticleSet posterior;
    FlowTrace trace;
};

// Normalized weights induced by the progressive likelihood at artificial
// time gamma over fixed reference locations: shifted softmax of the
// log-likelihoods. Sums to 1.
Vector weightsGamma(const Matrix& ref_locations, const LikelihoodModel& lik,
                    double gamma);

// d/dgamma of weightsGamma, computed stably as w_i * (r_i - sum_j w_j r_j)
// with r_i the log-derivative ratio.
Vector weightDotIterative(const Matrix& ref_locations, const LikelihoodModel& lik,
                          double gamma);

// Recursive-flow weight derivative (1/L) * (r_i - mean_j r_j). Requires the
// current set to carry equal weights.
Vector weightDotRecursive(const ParticleSet& current, const LikelihoodModel& lik_eff,
                          double gamma);

// J_k = -w_k sum_i { 4 wdot_i plog(x_k - xref_i) + k2 wdot_i xref_i },
// stacked over k.
Vector jVectorIterative(const ParticleSet& approx, const Matrix& ref_locations,
                        const Vector& weight_dots, const DistanceParams& params);

// Recursive variant: reference locations are the current set itself.
Vector jVectorRecursive(const ParticleSet& current, const Vector& weight_dots,
                        const DistanceParams& params);

struct NewtonStepResult {
    Vector eta_dot;
    double damping_used;
    double cond_estimate;
};

// Solves (H + lambda I) eta_dot = -J without forming H^{-1}. On
// factorization failure or a solution norm beyond 1e6 * (1 + eta_norm) the
// damping is escalated, lambda <- max(10 lambda, 1e-8 trace(H)/dim), up to
// 8 retries; persistent failure is a FlowStalledError.
NewtonStepResult newtonStep(const Matrix& hess, const Vector& jvec, double damping,
                            double eta_norm = 0.0);

// Integrates the Newton-flow ODE from gamma = 0 to 1. The recursive variant
// treats the current equal-weight set as its own reference with the
// effective likelihood; the iterative variant keeps the prior locations as
// reference with gamma-dependent weights. Unequal-weight priors are first
// equalized by particle reduction. The posterior always carries equal
// weights 1/L.
FlowResult integrateFlow(const ParticleSet& prior, const LikelihoodModel& lik,
                         const FlowConfig& cfg);

} // namespace flowfilt

#endif
