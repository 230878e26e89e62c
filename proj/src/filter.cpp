#include "flowfilt/filter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>

namespace flowfilt {

Index NoiseSpec::dim() const {
    switch (kind) {
        case Kind::none:
            return 0;
        case Kind::gaussian:
            return cov.rows();
        case Kind::deterministic_set:
            return samples ? samples->dim() : 0;
    }
    return 0;
}

namespace {

Vector orZero(const Vector& v, Index n) {
    return v.size() == 0 ? Vector::Zero(n) : v;
}

void addInPlace(Vector& x, const Vector& add, const char* what) {
    if (add.size() == 0) return;
    if (add.size() != x.size()) {
        throw DimensionError(std::string(what) + " dimension does not match state");
    }
    x += add;
}

} // namespace

SystemModel SystemModel::identity(Index n) {
    SystemModel m;
    m.state_dim = n;
    m.input_dim = n;
    m.transition = [](const Vector& x, const Vector& u, const Vector& w) {
        Vector out = x;
        addInPlace(out, u, "input");
        addInPlace(out, w, "noise");
        return out;
    };
    return m;
}

SystemModel SystemModel::linear(Matrix a) {
    if (a.rows() != a.cols()) {
        throw DomainError("system matrix must be square");
    }
    SystemModel m;
    m.state_dim = a.rows();
    m.input_dim = a.rows();
    m.transition = [a = std::move(a)](const Vector& x, const Vector& u, const Vector& w) {
        if (x.size() != a.rows()) {
            throw DimensionError("state dimension does not match system matrix");
        }
        Vector out = a * x;
        addInPlace(out, u, "input");
        addInPlace(out, w, "noise");
        return out;
    };
    return m;
}

SystemModel SystemModel::randomWalk(Index n) {
    return identity(n);
}

SystemModel SystemModel::coordinatedTurn2d(double dt, double turn_rate) {
    // State [px, py, vx, vy]; constant-speed turn at the given rate.
    SystemModel m;
    m.state_dim = 4;
    m.input_dim = 4;
    m.transition = [dt, turn_rate](const Vector& x, const Vector& u, const Vector& w) {
        if (x.size() != 4) {
            throw DimensionError("coordinated-turn model needs a 4-dimensional state");
        }
        const double omega = turn_rate;
        double s, c1;  // integral terms sin(w dt)/w and (1-cos(w dt))/w
        if (std::abs(omega) < 1e-12) {
            s = dt;
            c1 = 0.0;
        } else {
            s = std::sin(omega * dt) / omega;
            c1 = (1.0 - std::cos(omega * dt)) / omega;
        }
        const double co = std::cos(omega * dt);
        const double si = std::sin(omega * dt);
        Vector out(4);
        out[0] = x[0] + s * x[2] - c1 * x[3];
        out[1] = x[1] + c1 * x[2] + s * x[3];
        out[2] = co * x[2] - si * x[3];
        out[3] = si * x[2] + co * x[3];
        addInPlace(out, u, "input");
        addInPlace(out, w, "noise");
        return out;
    };
    return m;
}

SystemModel SystemModel::cubicDrift(Index n, double coeff) {
    SystemModel m;
    m.state_dim = n;
    m.input_dim = n;
    m.transition = [coeff](const Vector& x, const Vector& u, const Vector& w) {
        Vector out = x + coeff * x.array().cube().matrix();
        addInPlace(out, u, "input");
        addInPlace(out, w, "noise");
        return out;
    };
    return m;
}

ParticleSet predict(const ParticleSet& current, const SystemModel& system,
                    const Vector& input, std::mt19937_64& rng,
                    const DistanceParams& params) {
    const Index L = current.count();
    if (!system.transition) {
        throw DomainError("system model has no transition function");
    }
    const Vector u = input;

    if (system.noise.kind == NoiseSpec::Kind::deterministic_set) {
        const ParticleSet& noise = *system.noise.samples;
        const Index S = noise.count();
        Matrix locations(L * S, 0);
        Vector weights(L * S);
        Index out_dim = -1;
        for (Index i = 0; i < L; ++i) {
            for (Index s = 0; s < S; ++s) {
                Vector next = system.transition(current.location(i), u, noise.location(s));
                if (out_dim < 0) {
                    out_dim = next.size();
                    locations.resize(L * S, out_dim);
                }
                locations.row(i * S + s) = next.transpose();
                weights[i * S + s] = current.weights()[i] * noise.weights()[s];
            }
        }
        ParticleSet product(std::move(locations), weights / weights.sum());
        return reduceParticles(product, L, params).set;
    }

    std::normal_distribution<double> unit;
    Matrix noise_chol;
    if (system.noise.kind == NoiseSpec::Kind::gaussian) {
        Eigen::LLT<Matrix> llt(system.noise.cov);
        if (llt.info() != Eigen::Success) {
            throw DomainError("system noise covariance must be symmetric positive definite");
        }
        noise_chol = llt.matrixL();
    }
    Matrix locations;
    for (Index i = 0; i < L; ++i) {
        Vector w;
        if (system.noise.kind == NoiseSpec::Kind::gaussian) {
            Vector z(noise_chol.rows());
            for (Index d = 0; d < z.size(); ++d) z[d] = unit(rng);
            w = noise_chol * z;
        } else {
            w = Vector();
        }
        Vector next = system.transition(current.location(i), u, w);
        if (i == 0) {
            locations.resize(L, next.size());
        }
        locations.row(i) = next.transpose();
    }
    return ParticleSet(std::move(locations), current.weights());
}

ParticleSet update(const ParticleSet& current, const LikelihoodModel& lik,
                   const FlowConfig& cfg) {
    return integrateFlow(current, lik, cfg).posterior;
}

namespace {

// Largest weight first; ties resolved by distance, farthest from what was
// already chosen (or from the reference mean for the first pick).
std::vector<Index> subsetInit(const ParticleSet& ref, Index count) {
    const Index M = ref.count();
    const Vector& w = ref.weights();
    const Vector ref_mean = ref.mean();
    std::vector<bool> taken(M, false);
    std::vector<Index> chosen;
    chosen.reserve(count);
    Vector min_dist(M);
    for (Index j = 0; j < M; ++j) {
        min_dist[j] = (ref.location(j) - ref_mean).norm();
    }
    const double wmax_all = w.maxCoeff();
    const double weight_tie = 1e-12 * wmax_all;
    for (Index pick = 0; pick < count; ++pick) {
        double best_w = -1.0;
        for (Index j = 0; j < M; ++j) {
            if (!taken[j]) best_w = std::max(best_w, w[j]);
        }
        Index best = -1;
        double best_d = -1.0;
        for (Index j = 0; j < M; ++j) {
            if (taken[j] || w[j] < best_w - weight_tie) continue;
            if (min_dist[j] > best_d) {
                best_d = min_dist[j];
                best = j;
            }
        }
        taken[best] = true;
        chosen.push_back(best);
        for (Index j = 0; j < M; ++j) {
            if (!taken[j]) {
                min_dist[j] = std::min(min_dist[j],
                                       (ref.location(j) - ref.location(best)).norm());
            }
        }
    }
    return chosen;
}

} // namespace

namespace {

double minPairGap(const Matrix& x) {
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = i + 1; j < x.rows(); ++j) {
            best = std::min(best, (x.row(i) - x.row(j)).norm());
        }
    }
    return best;
}

} // namespace

ReduceResult reduceParticles(const ParticleSet& ref, Index count,
                             const DistanceParams& params, ReduceInit init,
                             const ParticleSet* init_set) {
    const Index M = ref.count();
    const Index N = ref.dim();
    if (count < 1 || count > M) {
        throw DomainError("reduction target count must lie in [1, M]");
    }
    Matrix x;
    if (init == ReduceInit::given) {
        if (!init_set) {
            throw DomainError("reduction with given initialization needs an initial set");
        }
        if (init_set->count() != count || init_set->dim() != N) {
            throw DimensionError("reduction initial set has wrong shape");
        }
        x = init_set->locations();
    } else {
        std::vector<Index> idx = subsetInit(ref, count);
        // Emit the subset in reference order; with count == M and equal
        // weights the start iterate is then the reference itself.
        std::sort(idx.begin(), idx.end());
        x.resize(count, N);
        for (Index i = 0; i < count; ++i) {
            x.row(i) = ref.locations().row(idx[i]);
        }
    }

    constexpr double kGradTol = 1e-8;
    constexpr int kMaxIters = 200;
    const Index dim = count * N;
    // Steps that drive two output particles (nearly) on top of each other are
    // rejected like ascent steps: near-duplicates are a local-minimum artifact
    // of the pair term, they carry no extra information, and they leave a
    // (numerically) singular log kernel behind for any later Newton flow over
    // the reduced set. The guard is a small fraction of the typical particle
    // spacing, spread / count.
    const double pair_guard =
        count > 1 ? 0.02 * std::sqrt(ref.covariance().trace()) /
                        static_cast<double>(count)
                  : 0.0;

    ParticleSet current = ParticleSet::equalWeights(x);
    DistanceReport rep = distance(current, ref, params);
    Vector grad = gradient(current, ref, params);
    std::vector<double> history{rep.total};
    double lambda = 0.0;
    int it = 0;
    bool converged = grad.norm() <= kGradTol;
    for (; it < kMaxIters && !converged; ++it) {
        Matrix hess;
        DistanceParams hparams = params;
        try {
            hess = hessian(current, ref, hparams);
        } catch (const SingularityError&) {
            hparams.jitter_coincident = true;
            hess = hessian(current, ref, hparams);
        }
        const double trace_floor =
            1e-8 * std::abs(hess.trace()) / static_cast<double>(dim);
        bool accepted = false;
        double lam_try = lambda;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Vector step;
            try {
                step = newtonStep(hess, grad, lam_try, x.norm()).eta_dot;
            } catch (const FlowStalledError&) {
                lam_try = std::max(10.0 * std::max(lam_try, 1e-300), trace_floor);
                continue;
            }
            Matrix x_next = current.locations();
            for (Index k = 0; k < count; ++k) {
                x_next.row(k) += step.segment(k * N, N).transpose();
            }
            if (!x_next.allFinite() ||
                (count > 1 && minPairGap(x_next) < pair_guard)) {
                lam_try = std::max(10.0 * std::max(lam_try, 1e-300), trace_floor);
                continue;
            }
            ParticleSet trial = ParticleSet::equalWeights(x_next);
            DistanceReport trial_rep = distance(trial, ref, params);
            if (std::isfinite(trial_rep.total) && trial_rep.total <= rep.total) {
                current = std::move(trial);
                rep = trial_rep;
                history.push_back(rep.total);
                grad = gradient(current, ref, params);
                lambda = 0.3 * lam_try;
                accepted = true;
                break;
            }
            lam_try = std::max(10.0 * std::max(lam_try, 1e-300), trace_floor);
        }
        if (!accepted) {
            break;  // no descent step found; return the best iterate so far
        }
        if (grad.norm() <= kGradTol) {
            converged = true;
        }
    }
    return ReduceResult{current, converged, it, rep.total, grad.norm(),
                        std::move(history)};
}

ParticleSet gaussianParticles(const Vector& mean, const Matrix& cov, Index count,
                              std::uint64_t seed, const DistanceParams& params,
                              Index draw_count) {
    const Index N = mean.size();
    if (cov.rows() != N || cov.cols() != N) {
        throw DimensionError("prior covariance does not match mean dimension");
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw DomainError("prior covariance must be symmetric positive definite");
    }
    if (draw_count <= 0) {
        draw_count = std::max<Index>(1000, 10 * count);
    }
    if (draw_count < count) {
        draw_count = count;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit;
    Matrix draws(draw_count, N);
    for (Index i = 0; i < draw_count; ++i) {
        for (Index d = 0; d < N; ++d) {
            draws(i, d) = unit(rng);
        }
    }
    // Standardize the draw to the exact target moments: Monte Carlo error in
    // the raw sample mean would otherwise leak into the reduced prior.
    Vector sample_mean = draws.colwise().mean();
    Matrix centered = draws.rowwise() - sample_mean.transpose();
    Matrix sample_cov = centered.transpose() * centered / static_cast<double>(draw_count);
    Eigen::LLT<Matrix> sample_llt(sample_cov);
    if (sample_llt.info() == Eigen::Success) {
        Matrix white = sample_llt.matrixL().solve(centered.transpose());
        centered = (Matrix(llt.matrixL()) * white).transpose();
    }
    Matrix target = centered.rowwise() + mean.transpose();
    ParticleSet big = ParticleSet::equalWeights(std::move(target));
    if (count == draw_count) {
        return big;
    }
    return reduceParticles(big, count, params).set;
}

ParticleSet baselineSir(const ParticleSet& current, const LikelihoodModel& lik,
                        std::uint64_t seed) {
    ReweightResult rw = bayesReweight(current, lik);
    const Index L = current.count();
    std::mt19937_64 rng(seed);
    std::discrete_distribution<Index> pick(rw.posterior.weights().data(),
                                           rw.posterior.weights().data() + L);
    Matrix locations(L, current.dim());
    for (Index i = 0; i < L; ++i) {
        locations.row(i) = rw.posterior.locations().row(pick(rng));
    }
    return ParticleSet::equalWeights(std::move(locations));
}

const char* methodName(Method m) {
    switch (m) {
        case Method::flow_recursive:
            return "flow-recursive";
        case Method::flow_iterative:
            return "flow-iterative";
        case Method::reweight:
            return "reweight";
        case Method::sir:
            return "sir";
    }
    return "unknown";
}

std::optional<Method> methodFromName(const std::string& name) {
    if (name == "flow-recursive") return Method::flow_recursive;
    if (name == "flow-iterative") return Method::flow_iterative;
    if (name == "reweight") return Method::reweight;
    if (name == "sir") return Method::sir;
    return std::nullopt;
}

LikelihoodModel LikelihoodTemplate::bind(const Vector& measurement) const {
    if (measurement.size() != measurement_dim) {
        throw DimensionError("measurement dimension does not match likelihood template");
    }
    return LikelihoodModel::gaussianAdditive(h, measurement, noise_cov, schedule);
}

std::vector<StepRecord> runScenario(const Scenario& scenario, Method method,
                                    FlowTrace* trace_out) {
    std::mt19937_64 rng(scenario.seed);
    ParticleSet current = scenario.prior;
    std::vector<StepRecord> records;
    records.push_back(StepRecord{0, method, current, current.mean(),
                                 current.covariance(), current.ess(), 0.0});
    FlowConfig cfg = scenario.flow;
    cfg.variant = (method == Method::flow_iterative) ? FlowVariant::iterative
                                                     : FlowVariant::recursive;
    if (trace_out) {
        cfg.trace = true;
    }
    for (std::size_t k = 0; k < scenario.measurements.size(); ++k) {
      try {
        const auto start = std::chrono::steady_clock::now();
        const Vector u = k < scenario.inputs.size() ? scenario.inputs[k] : Vector();
        current = predict(current, scenario.system, u, rng, scenario.flow.params);
        const LikelihoodModel lik = scenario.likelihood.bind(scenario.measurements[k]);
        switch (method) {
            case Method::flow_recursive:
            case Method::flow_iterative: {
                FlowResult fr = integrateFlow(current, lik, cfg);
                current = fr.posterior;
                if (trace_out) {
                    trace_out->snapshots.insert(trace_out->snapshots.end(),
                                                fr.trace.snapshots.begin(),
                                                fr.trace.snapshots.end());
                    trace_out->steps.insert(trace_out->steps.end(), fr.trace.steps.begin(),
                                            fr.trace.steps.end());
                }
                break;
            }
            case Method::reweight:
                current = bayesReweight(current, lik).posterior;
                break;
            case Method::sir:
                current = baselineSir(current, lik, rng());
                break;
        }
        const auto stop = std::chrono::steady_clock::now();
        const double ms =
            std::chrono::duration<double, std::milli>(stop - start).count();
        records.push_back(StepRecord{static_cast<int>(k) + 1, method, current,
                                     current.mean(), current.covariance(),
                                     current.ess(), ms});
      } catch (const FlowStalledError& e) {
        throw FlowStalledError("step " + std::to_string(k + 1) + ": " + e.what());
      } catch (const UpdateImpossibleError& e) {
        throw UpdateImpossibleError("step " + std::to_string(k + 1) + ": " + e.what());
      }
    }
    return records;
}

} // namespace flowfilt
