#include <doctest.h>

#include <cmath>
#include <random>

#include "flowfilt/homotopy.hpp"

using namespace flowfilt;

TEST_CASE("schedules hit the endpoints and stay monotone") {
    for (const Schedule& s :
         {Schedule::linear(), Schedule::power2(), Schedule::power(3.5)}) {
        CHECK(s.g(0.0) == 0.0);
        CHECK(s.g(1.0) == 1.0);
        double prev = 0.0;
        for (int i = 1; i <= 50; ++i) {
            const double g = s.g(i / 50.0);
            CHECK(g >= prev);
            prev = g;
        }
    }
    CHECK(Schedule::power2().g(0.5) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(Schedule::power(3.0).gdot(0.5) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(Schedule::power(0.5), DomainError);
}

TEST_CASE("gaussian log-likelihood, hand evaluated") {
    Vector y(1);
    y << 1.0;
    LikelihoodModel lik = LikelihoodModel::gaussianAdditive(
        [](const Vector& x) { return x; }, y, Matrix::Identity(1, 1));
    Vector x0 = Vector::Zero(1);
    CHECK(lik.logLik(y) == doctest::Approx(0.0).epsilon(1e-15)); // zero residual
    CHECK(lik.logLik(x0) == doctest::Approx(-0.5).epsilon(1e-15));

    LikelihoodModel wide = LikelihoodModel::gaussianAdditive(
        [](const Vector& x) { return x; }, y, 4.0 * Matrix::Identity(1, 1));
    CHECK(wide.logLik(x0) == doctest::Approx(-0.125).epsilon(1e-15));
}

TEST_CASE("homotopy endpoints and interior value") {
    LikelihoodModel lik = LikelihoodModel::fromLogLik([](const Vector&) { return -2.0; });
    Vector x = Vector::Zero(1);
    CHECK(lik.likGamma(x, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lik.likGamma(x, 1.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(lik.likGamma(x, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("gamma derivative: special values and finite differences") {
    Vector x = Vector::Zero(1);

    CHECK(LikelihoodModel::flat().dlikDgamma(x, 0.3) == 0.0);

    // power2 schedule: gdot(0) = 0, the slow-start property.
    LikelihoodModel slow = LikelihoodModel::fromLogLik(
        [](const Vector&) { return -4.0; }, Schedule::power2());
    CHECK(slow.logRatio(x, 0.0) == 0.0);

    LikelihoodModel lin = LikelihoodModel::fromLogLik([](const Vector&) { return -3.0; });
    CHECK(lin.logRatio(x, 0.0) == doctest::Approx(-3.0).epsilon(1e-15));
    CHECK(lin.dlikDgamma(x, 0.0) == doctest::Approx(-3.0).epsilon(1e-12));

    // Central finite differences of likGamma in gamma.
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> unif(0.1, 0.9);
    for (const Schedule& s : {Schedule::linear(), Schedule::power2()}) {
        LikelihoodModel lik = LikelihoodModel::fromLogLik(
            [](const Vector& v) { return -0.5 * v.squaredNorm(); }, s);
        for (int t = 0; t < 20; ++t) {
            Vector xt(2);
            xt << unif(rng), unif(rng);
            const double g = unif(rng);
            const double h = 1e-6;
            const double fd =
                (lik.likGamma(xt, g + h) - lik.likGamma(xt, g - h)) / (2.0 * h);
            CHECK(lik.dlikDgamma(xt, g) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("effective likelihood absorbs information up to gamma_star") {
    LikelihoodModel base = LikelihoodModel::fromLogLik([](const Vector&) { return -2.0; });
    Vector x = Vector::Zero(1);

    LikelihoodModel same = base.effective(0.0);
    CHECK(same.logLikGamma(x, 0.7) == doctest::Approx(base.logLikGamma(x, 0.7)).epsilon(1e-15));

    LikelihoodModel spent = base.effective(1.0);
    CHECK(spent.likGamma(x, 1.0) == doctest::Approx(1.0).epsilon(1e-15));

    LikelihoodModel half = base.effective(0.5);
    CHECK(half.likGamma(x, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(half.likGamma(x, 0.75) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("effective likelihoods compose like a semigroup") {
    LikelihoodModel base = LikelihoodModel::fromLogLik(
        [](const Vector& v) { return -1.3 * v.squaredNorm(); }, Schedule::power2());
    LikelihoodModel chained = base.effective(0.3).effective(0.8);
    LikelihoodModel direct = base.effective(0.8);
    std::mt19937_64 rng(22);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        Vector x(2);
        x << normal(rng), normal(rng);
        const double g = 0.05 * (t + 1);
        CHECK(chained.logLikGamma(x, g) ==
              doctest::Approx(direct.logLikGamma(x, g)).epsilon(1e-12));
    }
}
