#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "flowfilt/filter.hpp"

using namespace flowfilt;

namespace {

ParticleSet gaussianCloud(std::mt19937_64& rng, Index count, double mean, double std) {
    std::normal_distribution<double> normal(mean, std);
    Matrix loc(count, 1);
    for (Index i = 0; i < count; ++i) loc(i, 0) = normal(rng);
    return ParticleSet::equalWeights(loc);
}

} // namespace

TEST_CASE("predict: identity dynamics with zero noise is the identity") {
    std::mt19937_64 rng(41);
    ParticleSet set = gaussianCloud(rng, 30, 0.0, 1.0);
    SystemModel sys = SystemModel::identity(1);
    ParticleSet out = predict(set, sys, Vector::Zero(1), rng, DistanceParams{});
    CHECK((out.locations() - set.locations()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((out.weights() - set.weights()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("predict: additive input shifts every particle") {
    std::mt19937_64 rng(42);
    ParticleSet set = gaussianCloud(rng, 25, 0.0, 1.0);
    SystemModel sys = SystemModel::randomWalk(1); // x -> x + u (+ noise, none here)
    Vector u(1);
    u << 1.0;
    ParticleSet out = predict(set, sys, u, rng, DistanceParams{});
    CHECK((out.locations().array() - set.locations().array() - 1.0).abs().maxCoeff() <
          1e-15);
}

TEST_CASE("predict: linear contraction with gaussian noise matches moment propagation") {
    std::mt19937_64 rng(43);
    ParticleSet set = gaussianCloud(rng, 1000, 0.0, 1.0);
    const double var_in = set.covariance()(0, 0);

    SystemModel sys = SystemModel::linear(0.9 * Matrix::Identity(1, 1));
    sys.noise.kind = NoiseSpec::Kind::gaussian;
    sys.noise.cov = 0.01 * Matrix::Identity(1, 1);

    ParticleSet out = predict(set, sys, Vector::Zero(1), rng, DistanceParams{});
    const double expected = 0.81 * var_in + 0.01;
    CHECK(out.covariance()(0, 0) == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("predict: deterministic noise set expands and reduces back to L") {
    std::mt19937_64 rng(44);
    ParticleSet set = gaussianCloud(rng, 12, 0.0, 1.0);
    Matrix noise_loc(3, 1);
    noise_loc << -0.1, 0.0, 0.1;
    SystemModel sys = SystemModel::randomWalk(1);
    sys.noise.kind = NoiseSpec::Kind::deterministic_set;
    sys.noise.samples = ParticleSet::equalWeights(noise_loc);

    ParticleSet out = predict(set, sys, Vector::Zero(1), rng, DistanceParams{});
    CHECK(out.count() == set.count());
    CHECK(out.hasEqualWeights());
    CHECK(out.mean()[0] == doctest::Approx(set.mean()[0]).epsilon(0.05));
}

TEST_CASE("update is self-contained and flat-likelihood stable") {
    std::mt19937_64 rng(45);
    ParticleSet set = gaussianCloud(rng, 40, 0.0, 1.0);
    FlowConfig cfg;
    cfg.step_count = 16;
    ParticleSet out = update(set, LikelihoodModel::flat(), cfg);
    CHECK((out.locations() - set.locations()).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("reduce: equal-weight reference with matching count is returned as is") {
    std::mt19937_64 rng(46);
    ParticleSet ref = gaussianCloud(rng, 8, 0.0, 1.0);
    ReduceResult r = reduceParticles(ref, 8, DistanceParams{});
    CHECK(r.converged);
    CHECK((r.set.locations() - ref.locations()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reduce: two particles collapse to their midpoint") {
    Matrix loc(2, 1);
    loc << 0.0, 1.0;
    ParticleSet ref = ParticleSet::equalWeights(loc);
    ReduceResult r = reduceParticles(ref, 1, DistanceParams{});
    CHECK(r.set.count() == 1);
    CHECK(r.set.locations()(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("reduce: distance history is monotone nonincreasing") {
    std::mt19937_64 rng(47);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix loc(200, 2);
    for (Index i = 0; i < 200; ++i) {
        loc(i, 0) = normal(rng);
        loc(i, 1) = normal(rng);
    }
    ReduceResult r = reduceParticles(ParticleSet::equalWeights(loc), 10, DistanceParams{});
    REQUIRE(!r.distance_history.empty());
    for (std::size_t i = 1; i < r.distance_history.size(); ++i) {
        CHECK(r.distance_history[i] <= r.distance_history[i - 1] + 1e-12);
    }
    CHECK(r.final_distance == doctest::Approx(r.distance_history.back()).epsilon(1e-12));
}

TEST_CASE("gaussian particle sampler hits the requested moments") {
    DistanceParams params;
    Vector mean(2);
    mean << 1.0, -2.0;
    Matrix cov(2, 2);
    cov << 2.0, 0.5, 0.5, 1.0;
    ParticleSet set = gaussianParticles(mean, cov, 60, 99, params);
    CHECK(set.count() == 60);
    CHECK((set.mean() - mean).cwiseAbs().maxCoeff() < 0.1);
    CHECK((set.covariance() - cov).cwiseAbs().maxCoeff() < 0.3);

    // Seed determinism.
    ParticleSet again = gaussianParticles(mean, cov, 60, 99, params);
    CHECK((set.locations() - again.locations()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sir baseline replicates locations and collapses under hard zeros") {
    Matrix loc(2, 1);
    loc << 0.0, 1.0;
    ParticleSet prior = ParticleSet::equalWeights(loc);

    // f_L values [0, 1]: every resampled particle sits at location 1.
    LikelihoodModel lik = LikelihoodModel::fromLogLik([](const Vector& x) {
        return x[0] < 0.5 ? -std::numeric_limits<double>::infinity() : 0.0;
    });
    ParticleSet out = baselineSir(prior, lik, 7);
    CHECK((out.locations().array() - 1.0).abs().maxCoeff() == 0.0);

    // Flat likelihood: a resample, so every output location is an input one.
    ParticleSet flat = baselineSir(prior, LikelihoodModel::flat(), 7);
    for (Index i = 0; i < flat.count(); ++i) {
        const double x = flat.locations()(i, 0);
        CHECK((x == 0.0 || x == 1.0));
    }
}

TEST_CASE("method names round-trip") {
    for (Method m : {Method::flow_recursive, Method::flow_iterative, Method::reweight,
                     Method::sir}) {
        auto back = methodFromName(methodName(m));
        REQUIRE(back.has_value());
        CHECK(*back == m);
    }
    CHECK_FALSE(methodFromName("no-such-method").has_value());
}

TEST_CASE("scenario: zero measurements yields the prior record only") {
    std::mt19937_64 rng(48);
    Scenario s;
    s.system = SystemModel::identity(1);
    s.likelihood.h = [](const Vector& x) { return x; };
    s.likelihood.measurement_dim = 1;
    s.likelihood.noise_cov = Matrix::Identity(1, 1);
    s.prior = gaussianCloud(rng, 20, 0.3, 1.0);
    s.flow.step_count = 16;

    std::vector<StepRecord> recs = runScenario(s, Method::flow_recursive);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].step == 0);
    CHECK((recs[0].mean - s.prior.mean()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(recs[0].ess == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("scenario: repeated identical measurements shrink the variance") {
    std::mt19937_64 rng(49);
    Scenario s;
    s.system = SystemModel::identity(1); // static state, zero noise
    s.likelihood.h = [](const Vector& x) { return x; };
    s.likelihood.measurement_dim = 1;
    s.likelihood.noise_cov = Matrix::Identity(1, 1);
    s.prior = gaussianCloud(rng, 50, 0.0, 1.0);
    s.flow.step_count = 32;
    Vector y(1);
    y << 0.5;
    s.measurements = {y, y, y};

    std::vector<StepRecord> recs = runScenario(s, Method::flow_recursive);
    REQUIRE(recs.size() == 4);
    for (std::size_t k = 1; k < recs.size(); ++k) {
        CHECK(recs[k].covariance(0, 0) <= recs[k - 1].covariance(0, 0) + 1e-9);
        CHECK(recs[k].ess == doctest::Approx(50.0).epsilon(1e-12));
        CHECK(recs[k].particles.count() == 50);
    }
}

TEST_CASE("scenario runs are deterministic given the seed") {
    std::mt19937_64 rng(50);
    Scenario s;
    s.system = SystemModel::randomWalk(1);
    s.system.noise.kind = NoiseSpec::Kind::gaussian;
    s.system.noise.cov = 0.04 * Matrix::Identity(1, 1);
    s.likelihood.h = [](const Vector& x) { return x; };
    s.likelihood.measurement_dim = 1;
    s.likelihood.noise_cov = Matrix::Identity(1, 1);
    s.prior = gaussianCloud(rng, 30, 0.0, 1.0);
    s.flow.step_count = 16;
    s.seed = 1234;
    Vector y(1);
    y << 0.2;
    s.measurements = {y, y};

    for (Method m : {Method::flow_recursive, Method::sir}) {
        std::vector<StepRecord> a = runScenario(s, m);
        std::vector<StepRecord> b = runScenario(s, m);
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK((a[k].particles.locations() - b[k].particles.locations())
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("narrow likelihood: flow keeps particles distinct, sir collapses") {
    std::mt19937_64 rng(51);
    ParticleSet prior = gaussianCloud(rng, 50, 0.0, 1.0);
    Vector y(1);
    y << 0.0;
    // Noise std 0.05 = 0.05 x prior std: harsh but cheap enough for a unit test.
    LikelihoodModel lik = LikelihoodModel::gaussianAdditive(
        [](const Vector& x) { return x; }, y, 0.0025 * Matrix::Identity(1, 1));

    FlowConfig cfg;
    cfg.integrator = FlowIntegrator::adaptive_heun;
    cfg.tolerance = 1e-3;
    ParticleSet post = update(prior, lik, cfg);
    std::set<double> distinct_flow(post.locations().col(0).begin(),
                                   post.locations().col(0).end());
    CHECK(distinct_flow.size() == 50);
    CHECK(post.ess() == doctest::Approx(50.0).epsilon(1e-12));

    ParticleSet sir = baselineSir(prior, lik, 77);
    std::set<double> distinct_sir(sir.locations().col(0).begin(),
                                  sir.locations().col(0).end());
    CHECK(distinct_sir.size() < distinct_flow.size());
}
