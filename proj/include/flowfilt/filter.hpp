#ifndef FLOWFILT_FILTER_HPP
#define FLOWFILT_FILTER_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowfilt/flow.hpp"

namespace flowfilt {

using TransitionFn =
    std::function<Vector(const Vector& x, const Vector& u, const Vector& w)>;

// System noise specification for the prediction step.
struct NoiseSpec {
    enum class Kind { none, gaussian, deterministic_set };
    Kind kind = Kind::none;
    Matrix cov;                          // gaussian: W x W SPD
    std::optional<ParticleSet> samples;  // deterministic_set: S weighted noise particles
    Index dim() const;
};

// Discrete-time process model x_{k+1} = a(x_k, u_k, w_k).
struct SystemModel {
    TransitionFn transition;
    Index state_dim = 0;
    Index input_dim = 0;
    NoiseSpec noise;

    static SystemModel identity(Index n);
    static SystemModel linear(Matrix a);  // x -> A x + u
    static SystemModel randomWalk(Index n);
    static SystemModel coordinatedTurn2d(double dt, double turn_rate);
    static SystemModel cubicDrift(Index n, double coeff);
};

// Propagates the particle set through the system model. Gaussian noise draws
// one realization per particle from rng; a deterministic noise set expands to
// the L*S product set and reduces back to L equal-weight particles.
ParticleSet predict(const ParticleSet& current, const SystemModel& system,
                    const Vector& input, std::mt19937_64& rng,
                    const DistanceParams& params);

// Measurement update via the Newton flow. Self-contained: depends on the
// prior set and the likelihood only.
ParticleSet update(const ParticleSet& current, const LikelihoodModel& lik,
                   const FlowConfig& cfg);

enum class ReduceInit { subset, given };

struct ReduceResult {
    ParticleSet set;
    bool converged;
    int iterations;
    double final_distance;
    double final_grad_norm;
    std::vector<double> distance_history;  // initial value plus one per accepted step
};

// Equal-weight L-particle approximation of ref, found by damped Newton
// minimization of the set distance. Initialized from an L-subset of ref
// (largest weight first, farthest-point tie-breaking) or from a caller
// supplied set. Iterations are monotone nonincreasing in distance; stops at
// gradient norm <= 1e-8 or 200 iterations (converged flag reports which).
ReduceResult reduceParticles(const ParticleSet& ref, Index count,
                             const DistanceParams& params,
                             ReduceInit init = ReduceInit::subset,
                             const ParticleSet* init_set = nullptr);

// Equal-weight particle representation of N(mean, cov): a large seeded
// Gaussian draw is standardized to the exact target moments and reduced.
ParticleSet gaussianParticles(const Vector& mean, const Matrix& cov, Index count,
                              std::uint64_t seed, const DistanceParams& params,
                              Index draw_count = 0);

// Bootstrap baseline: Bayes reweighting followed by seeded multinomial
// resampling to L equal-weight particles. Locations are replicated, never
// moved.
ParticleSet baselineSir(const ParticleSet& current, const LikelihoodModel& lik,
                        std::uint64_t seed);

enum class Method { flow_recursive, flow_iterative, reweight, sir };

const char* methodName(Method m);
std::optional<Method> methodFromName(const std::string& name);

// Likelihood family bound to a concrete measurement per step.
struct LikelihoodTemplate {
    MeasurementFn h;
    Index measurement_dim = 0;
    Matrix noise_cov;
    Schedule schedule = Schedule::linear();

    LikelihoodModel bind(const Vector& measurement) const;
};

struct Scenario {
    SystemModel system;
    LikelihoodTemplate likelihood;
    ParticleSet prior;
    std::vector<Vector> measurements;
    std::vector<Vector> inputs;  // empty -> zero input per step
    FlowConfig flow;
    std::uint64_t seed = 0;
};

struct StepRecord {
    int step;  // 0 = prior, 1..K = after measurement k
    Method method;
    ParticleSet particles;
    Vector mean;
    Matrix covariance;
    double ess;
    double wall_ms;
};

// Alternates prediction and measurement update over the measurement
// sequence. Record 0 holds the prior statistics. Deterministic given the
// scenario seed.
std::vector<StepRecord> runScenario(const Scenario& scenario, Method method,
                                    FlowTrace* trace_out = nullptr);

} // namespace flowfilt

#endif
