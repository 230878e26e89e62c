#include "flowfilt/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "flowfilt/filter.hpp"
#include "flowfilt/io.hpp"

namespace flowfilt {

namespace {

double relErr(const Vector& got, const Vector& want) {
    return (got - want).cwiseAbs().maxCoeff() /
           std::max(1.0, want.cwiseAbs().maxCoeff());
}

double relErr(const Matrix& got, const Matrix& want) {
    return (got - want).cwiseAbs().maxCoeff() /
           std::max(1.0, want.cwiseAbs().maxCoeff());
}

ParticleSet randomSet(std::mt19937_64& rng, Index count, Index dim, double spread) {
    std::normal_distribution<double> unit;
    std::uniform_real_distribution<double> uw(0.1, 1.0);
    Matrix loc(count, dim);
    Vector w(count);
    for (Index i = 0; i < count; ++i) {
        for (Index d = 0; d < dim; ++d) loc(i, d) = spread * unit(rng);
        w[i] = uw(rng);
    }
    w /= w.sum();
    return ParticleSet(std::move(loc), std::move(w));
}

Vector fdGradient(const ParticleSet& approx, const ParticleSet& ref,
                  const DistanceParams& params, double h) {
    const Index L = approx.count();
    const Index N = approx.dim();
    Vector g(L * N);
    for (Index k = 0; k < L; ++k) {
        for (Index d = 0; d < N; ++d) {
            Matrix plus = approx.locations();
            Matrix minus = approx.locations();
            plus(k, d) += h;
            minus(k, d) -= h;
            const double fp =
                distance(ParticleSet(plus, approx.weights()), ref, params).total;
            const double fm =
                distance(ParticleSet(minus, approx.weights()), ref, params).total;
            g[k * N + d] = (fp - fm) / (2.0 * h);
        }
    }
    return g;
}

Matrix fdHessian(const ParticleSet& approx, const ParticleSet& ref,
                 const DistanceParams& params, double h) {
    const Index L = approx.count();
    const Index N = approx.dim();
    Matrix hess(L * N, L * N);
    for (Index k = 0; k < L; ++k) {
        for (Index d = 0; d < N; ++d) {
            Matrix plus = approx.locations();
            Matrix minus = approx.locations();
            plus(k, d) += h;
            minus(k, d) -= h;
            const Vector gp =
                gradient(ParticleSet(plus, approx.weights()), ref, params);
            const Vector gm =
                gradient(ParticleSet(minus, approx.weights()), ref, params);
            hess.col(k * N + d) = (gp - gm) / (2.0 * h);
        }
    }
    return 0.5 * (hess + hess.transpose());
}

// Gradient as a function of gamma through the reference weights only.
Vector gradientAtGamma(const ParticleSet& approx, const Matrix& ref_locations,
                       const LikelihoodModel& lik, double gamma,
                       const DistanceParams& params) {
    const Vector w = weightsGamma(ref_locations, lik, gamma);
    return gradient(approx, ParticleSet(ref_locations, w), params);
}

} // namespace

GradcheckResult runGradcheck(const GradcheckOptions& opts) {
    GradcheckResult result;
    const DistanceParams params;
    constexpr double kH = 1e-6;
    constexpr double kHGamma = 1e-5;
    for (int trial = 0; trial < opts.trials; ++trial) {
        const std::uint64_t trial_seed = opts.seed + static_cast<std::uint64_t>(trial);
        std::mt19937_64 rng(trial_seed);
        std::uniform_int_distribution<Index> ud(1, opts.max_dim);
        std::uniform_int_distribution<Index> uc(1, opts.max_count);
        std::uniform_real_distribution<double> ug(0.1, 0.9);
        const Index N = ud(rng);
        const Index L = uc(rng);
        const Index M = uc(rng);
        ParticleSet approx = randomSet(rng, L, N, 1.5);
        ParticleSet ref = randomSet(rng, M, N, 1.5);

        const double grad_err =
            relErr(gradient(approx, ref, params), fdGradient(approx, ref, params, kH));
        const double hess_err =
            relErr(hessian(approx, ref, params), fdHessian(approx, ref, params, kH));

        std::normal_distribution<double> unit;
        Vector y(N);
        for (Index d = 0; d < N; ++d) y[d] = unit(rng);
        const LikelihoodModel lik = LikelihoodModel::gaussianAdditive(
            [](const Vector& x) { return x; }, y, Matrix::Identity(N, N));
        const double gamma = ug(rng);

        const Vector wdot_it = weightDotIterative(ref.locations(), lik, gamma);
        const Vector j_it = jVectorIterative(approx, ref.locations(), wdot_it, params);
        const Vector j_it_fd =
            (gradientAtGamma(approx, ref.locations(), lik, gamma + kHGamma, params) -
             gradientAtGamma(approx, ref.locations(), lik, gamma - kHGamma, params)) /
            (2.0 * kHGamma);
        double j_err = relErr(j_it, j_it_fd);

        // Recursive variant: the equal-weight set is its own reference under
        // the effective likelihood anchored at gamma.
        ParticleSet current = ParticleSet::equalWeights(approx.locations());
        const LikelihoodModel lik_eff = lik.effective(gamma);
        const Vector wdot_rec = weightDotRecursive(current, lik_eff, gamma);
        const Vector j_rec = jVectorRecursive(current, wdot_rec, params);
        const Vector j_rec_fd =
            (gradientAtGamma(current, current.locations(), lik_eff, gamma + kHGamma,
                             params) -
             gradientAtGamma(current, current.locations(), lik_eff, gamma - kHGamma,
                             params)) /
            (2.0 * kHGamma);
        j_err = std::max(j_err, relErr(j_rec, j_rec_fd));

        const double prev_worst =
            std::max({result.worst_grad, result.worst_hess, result.worst_j});
        result.worst_grad = std::max(result.worst_grad, grad_err);
        result.worst_hess = std::max(result.worst_hess, hess_err);
        result.worst_j = std::max(result.worst_j, j_err);
        if (std::max({grad_err, hess_err, j_err}) > prev_worst) {
            result.failing_seed = trial_seed;
        }
        ++result.trials;
    }
    result.pass = result.worst_grad <= opts.grad_tol &&
                  result.worst_hess <= opts.hess_tol && result.worst_j <= opts.j_tol;
    return result;
}

namespace {

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) { return formatDouble(v); }

LikelihoodModel identityGaussian(const Vector& y, double noise_var) {
    const Index n = y.size();
    return LikelihoodModel::gaussianAdditive([](const Vector& x) { return x; }, y,
                                             noise_var * Matrix::Identity(n, n));
}

CheckResult checkDerivatives() {
    const auto t0 = Clock::now();
    GradcheckOptions opts;
    GradcheckResult r = runGradcheck(opts);
    const double secs = secondsSince(t0);
    std::ostringstream d;
    d << r.trials << " instances, worst grad " << fmt(r.worst_grad) << " (tol "
      << fmt(opts.grad_tol) << "), worst hess " << fmt(r.worst_hess) << " (tol "
      << fmt(opts.hess_tol) << "), worst J " << fmt(r.worst_j) << " (tol "
      << fmt(opts.j_tol) << ")";
    const bool pass = r.pass && secs < 30.0;
    if (secs >= 30.0) d << "; exceeded the 30 s budget";
    return {"derivative-correctness", pass, d.str(), secs};
}

CheckResult checkLinearGaussian() {
    const auto t0 = Clock::now();
    const DistanceParams params;
    FlowConfig cfg;
    std::ostringstream d;
    bool pass = true;

    {
        const auto t1 = Clock::now();
        ParticleSet prior =
            gaussianParticles(Vector::Zero(1), Matrix::Identity(1, 1), 100, 4711, params);
        ParticleSet post = update(prior, identityGaussian(Vector::Ones(1), 1.0), cfg);
        const double mean = post.mean()[0];
        const double var = post.covariance()(0, 0);
        const double secs = secondsSince(t1);
        const bool ok =
            std::abs(mean - 0.5) <= 0.02 && std::abs(var - 0.5) <= 0.05 && secs < 5.0;
        d << "1D mean " << fmt(mean) << " var " << fmt(var) << " vs N(0.5, 0.5), "
          << fmt(secs) << " s";
        pass = pass && ok;
    }
    {
        const auto t1 = Clock::now();
        ParticleSet prior =
            gaussianParticles(Vector::Zero(2), Matrix::Identity(2, 2), 100, 4712, params);
        ParticleSet post = update(prior, identityGaussian(Vector::Ones(2), 1.0), cfg);
        const Vector exact_mean = 0.5 * Vector::Ones(2);
        const Matrix exact_cov = 0.5 * Matrix::Identity(2, 2);
        const double mean_rel = (post.mean() - exact_mean).norm() / exact_mean.norm();
        const double cov_rel =
            (post.covariance() - exact_cov).norm() / exact_cov.norm();
        const double secs = secondsSince(t1);
        const bool ok = mean_rel <= 0.03 && cov_rel <= 0.08 && secs < 5.0;
        d << "; 2D mean err " << fmt(mean_rel) << " (tol 0.03) cov err " << fmt(cov_rel)
          << " (tol 0.08), " << fmt(secs) << " s";
        pass = pass && ok;
    }
    return {"linear-gaussian-oracle", pass, d.str(), secondsSince(t0)};
}

Index distinctCount(const ParticleSet& set) {
    std::set<std::vector<double>> seen;
    for (Index i = 0; i < set.count(); ++i) {
        std::vector<double> row(set.dim());
        for (Index d = 0; d < set.dim(); ++d) row[d] = set.locations()(i, d);
        seen.insert(std::move(row));
    }
    return static_cast<Index>(seen.size());
}

CheckResult checkDegeneracy() {
    const auto t0 = Clock::now();
    const DistanceParams params;
    ParticleSet prior =
        gaussianParticles(Vector::Zero(1), Matrix::Identity(1, 1), 100, 4713, params);
    // Measurement noise std 0.01 = 1% of the prior std.
    const LikelihoodModel lik = identityGaussian(Vector::Zero(1), 1e-4);

    FlowConfig cfg;
    cfg.integrator = FlowIntegrator::adaptive_heun;
    cfg.tolerance = 1e-4;  // distinctness, not moment accuracy, is at stake
    ParticleSet flow_post = update(prior, lik, cfg);
    const double flow_ess = flow_post.ess();
    const Index flow_distinct = distinctCount(flow_post);

    const double reweight_ess = bayesReweight(prior, lik).effective_sample_size;
    const Index sir_distinct = distinctCount(baselineSir(prior, lik, 99));

    const bool pass = std::abs(flow_ess - 100.0) <= 1e-9 && flow_distinct == 100 &&
                      reweight_ess < 5.0 && sir_distinct < 10;
    std::ostringstream d;
    d << "flow ESS " << fmt(flow_ess) << " distinct " << flow_distinct
      << "/100; reweight ESS " << fmt(reweight_ess) << " (< 5); SIR distinct "
      << sir_distinct << " (< 10)";
    return {"degeneracy-free", pass, d.str(), secondsSince(t0)};
}

CheckResult checkConservation() {
    const auto t0 = Clock::now();
    const DistanceParams params;
    std::mt19937_64 rng(20240817);
    ParticleSet set = randomSet(rng, 25, 2, 1.0);
    ParticleSet equal = ParticleSet::equalWeights(set.locations());
    const LikelihoodModel lik = identityGaussian(0.3 * Vector::Ones(2), 0.5);

    double worst_sum = 0.0;
    for (int s = 0; s <= 20; ++s) {
        const double gamma = s / 20.0;
        worst_sum = std::max(
            worst_sum, std::abs(weightDotIterative(set.locations(), lik, gamma).sum()));
        worst_sum = std::max(
            worst_sum,
            std::abs(weightDotRecursive(equal, lik.effective(gamma), gamma).sum()));
    }

    FlowConfig cfg;
    ParticleSet flat_post = update(equal, LikelihoodModel::flat(), cfg);
    const double flat_move =
        (flat_post.locations() - equal.locations()).cwiseAbs().maxCoeff();

    const double self_grad =
        gradient(equal, equal, params).cwiseAbs().maxCoeff();

    const bool pass = worst_sum <= 1e-12 && flat_move <= 1e-9 && self_grad == 0.0;
    std::ostringstream d;
    d << "worst |sum wdot| " << fmt(worst_sum) << " (tol 1e-12); flat-likelihood move "
      << fmt(flat_move) << " (tol 1e-9); self-fit gradient " << fmt(self_grad)
      << " (exact 0)";
    return {"conservation-fixed-points", pass, d.str(), secondsSince(t0)};
}

CheckResult checkChainedUpdates() {
    const auto t0 = Clock::now();
    const DistanceParams params;
    ParticleSet prior =
        gaussianParticles(Vector::Zero(1), Matrix::Identity(1, 1), 200, 4714, params);
    const LikelihoodModel lik1 = identityGaussian(Vector::Ones(1), 1.0);
    const LikelihoodModel lik2 = identityGaussian(0.5 * Vector::Ones(1), 1.0);
    const LikelihoodModel combined = LikelihoodModel::fromLogLik([&](const Vector& x) {
        return lik1.logLik(x) + lik2.logLik(x);
    });

    FlowConfig cfg;
    ParticleSet chained = update(update(prior, lik1, cfg), lik2, cfg);
    ParticleSet single = update(prior, combined, cfg);

    // Dense-grid Bayes oracle over the standard-normal prior density.
    const int G = 100000;
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (int g = 0; g < G; ++g) {
        const double x = -10.0 + 20.0 * (g + 0.5) / G;
        Vector xv(1);
        xv[0] = x;
        const double p =
            std::exp(-0.5 * x * x + lik1.logLik(xv) + lik2.logLik(xv));
        m0 += p;
        m1 += p * x;
        m2 += p * x * x;
    }
    const double grid_mean = m1 / m0;
    const double grid_var = m2 / m0 - grid_mean * grid_mean;

    const auto rel = [&](const ParticleSet& s, double& me, double& ve) {
        me = std::abs(s.mean()[0] - grid_mean) / std::abs(grid_mean);
        ve = std::abs(s.covariance()(0, 0) - grid_var) / grid_var;
    };
    double cm, cv, sm, sv;
    rel(chained, cm, cv);
    rel(single, sm, sv);
    const bool pass = cm <= 0.05 && cv <= 0.05 && sm <= 0.05 && sv <= 0.05;
    std::ostringstream d;
    d << "grid posterior N(" << fmt(grid_mean) << ", " << fmt(grid_var)
      << "); chained rel err mean " << fmt(cm) << " var " << fmt(cv)
      << "; single rel err mean " << fmt(sm) << " var " << fmt(sv) << " (tol 0.05)";
    return {"chained-updates", pass, d.str(), secondsSince(t0)};
}

CheckResult checkIntegratorOrder() {
    const auto t0 = Clock::now();
    const DistanceParams params;
    ParticleSet prior =
        gaussianParticles(Vector::Zero(1), Matrix::Identity(1, 1), 15, 4715, params);
    const LikelihoodModel lik = identityGaussian(Vector::Ones(1), 1.0);

    const auto terminal = [&](int steps) {
        FlowConfig cfg;
        cfg.step_count = steps;
        Vector x = update(prior, lik, cfg).locations().col(0);
        std::sort(x.data(), x.data() + x.size());
        return x;
    };
    const Vector ref = terminal(4096);
    const double e16 = (terminal(16) - ref).cwiseAbs().maxCoeff();
    const double e32 = (terminal(32) - ref).cwiseAbs().maxCoeff();
    const double e64 = (terminal(64) - ref).cwiseAbs().maxCoeff();
    const double r1 = e16 / std::max(e32, 1e-300);
    const double r2 = e32 / std::max(e64, 1e-300);
    const bool pass = std::max(r1, r2) >= 8.0;
    std::ostringstream d;
    d << "errors vs 4096-step reference: e16 " << fmt(e16) << " e32 " << fmt(e32)
      << " e64 " << fmt(e64) << "; halving ratios " << fmt(r1) << ", " << fmt(r2)
      << " (need >= 8)";
    return {"integrator-order", pass, d.str(), secondsSince(t0)};
}

CheckResult checkReduction() {
    const auto t0 = Clock::now();
    const DistanceParams params;
    ParticleSet draws = gaussianParticles(Vector::Zero(2), Matrix::Identity(2, 2), 1000,
                                          4716, params, 1000);
    ReduceResult red = reduceParticles(draws, 20, params);

    bool monotone = true;
    for (std::size_t i = 1; i < red.distance_history.size(); ++i) {
        if (red.distance_history[i] > red.distance_history[i - 1]) monotone = false;
    }

    std::mt19937_64 rng(4717);
    double best_subset = std::numeric_limits<double>::infinity();
    std::vector<Index> idx(1000);
    std::iota(idx.begin(), idx.end(), 0);
    for (int trial = 0; trial < 100; ++trial) {
        std::shuffle(idx.begin(), idx.end(), rng);
        Matrix loc(20, 2);
        for (Index i = 0; i < 20; ++i) loc.row(i) = draws.locations().row(idx[i]);
        best_subset = std::min(
            best_subset,
            distance(ParticleSet::equalWeights(loc), draws, params).total);
    }

    const bool pass = monotone && red.final_distance < best_subset;
    std::ostringstream d;
    d << "reduced distance " << fmt(red.final_distance) << " vs best of 100 subsets "
      << fmt(best_subset) << "; " << red.iterations << " iterations "
      << (monotone ? "monotone" : "NOT monotone");
    return {"reduction-quality", pass, d.str(), secondsSince(t0)};
}

Scenario demoScenario() {
    const DistanceParams params;
    SystemModel sys = SystemModel::identity(1);
    sys.noise.kind = NoiseSpec::Kind::gaussian;
    sys.noise.cov = 0.01 * Matrix::Identity(1, 1);
    LikelihoodTemplate lik{[](const Vector& x) { return x; }, 1,
                           Matrix::Identity(1, 1), Schedule::linear()};
    ParticleSet prior =
        gaussianParticles(Vector::Zero(1), Matrix::Identity(1, 1), 30, 4718, params);
    std::vector<Vector> ys;
    for (double y : {0.8, 1.1, 0.9}) ys.push_back(y * Vector::Ones(1));
    return Scenario{std::move(sys), std::move(lik), std::move(prior), std::move(ys),
                    {},          FlowConfig{},      12345};
}

CheckResult checkDeterminism() {
    const auto t0 = Clock::now();
    const Scenario scenario = demoScenario();
    const auto render = [&] {
        std::string out;
        for (Method m : {Method::flow_recursive, Method::sir}) {
            out += estimatesCsv(runScenario(scenario, m));
        }
        return out;
    };
    const std::string a = render();
    const std::string b = render();
    const bool pass = a == b;
    std::ostringstream d;
    d << "two runs of the same seeded scenario produce "
      << (pass ? "bit-identical" : "DIFFERING") << " estimate tables ("
      << a.size() << " bytes)";
    return {"determinism", pass, d.str(), secondsSince(t0)};
}

CheckResult checkRuntime() {
    const auto t0 = Clock::now();
    const DistanceParams params;
    ParticleSet prior =
        gaussianParticles(Vector::Zero(2), Matrix::Identity(2, 2), 100, 4719, params);
    const LikelihoodModel lik = identityGaussian(Vector::Ones(2), 1.0);
    const auto t1 = Clock::now();
    update(prior, lik, FlowConfig{});
    const double secs = secondsSince(t1);
    const bool pass = secs < 3.0;
    std::ostringstream d;
    d << "flow update L=100 N=2, 64 RK4 steps: " << fmt(secs) << " s (< 3 s)";
    return {"runtime-envelope", pass, d.str(), secondsSince(t0)};
}

} // namespace

std::vector<std::string> selftestNames() {
    return {"derivative-correctness", "linear-gaussian-oracle", "degeneracy-free",
            "conservation-fixed-points", "chained-updates",      "integrator-order",
            "reduction-quality",        "determinism",           "runtime-envelope"};
}

std::vector<CheckResult> runSelftest() {
    const std::vector<std::pair<std::string, CheckResult (*)()>> checks = {
        {"derivative-correctness", checkDerivatives},
        {"linear-gaussian-oracle", checkLinearGaussian},
        {"degeneracy-free", checkDegeneracy},
        {"conservation-fixed-points", checkConservation},
        {"chained-updates", checkChainedUpdates},
        {"integrator-order", checkIntegratorOrder},
        {"reduction-quality", checkReduction},
        {"determinism", checkDeterminism},
        {"runtime-envelope", checkRuntime},
    };
    std::vector<CheckResult> results;
    for (const auto& [name, fn] : checks) {
        const auto t0 = Clock::now();
        try {
            results.push_back(fn());
        } catch (const std::exception& e) {
            results.push_back(
                {name, false, std::string("exception: ") + e.what(), secondsSince(t0)});
        }
    }
    return results;
}

} // namespace flowfilt
