#include <doctest.h>

#include <cmath>
#include <random>

#include "flowfilt/distance.hpp"
#include "flowfilt/kernels.hpp"

using namespace flowfilt;

namespace {

ParticleSet randomSet(std::mt19937_64& rng, Index count, Index dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    Matrix loc(count, dim);
    Vector w(count);
    for (Index i = 0; i < count; ++i) {
        for (Index j = 0; j < dim; ++j) loc(i, j) = normal(rng);
        w[i] = unif(rng);
    }
    w /= w.sum();
    return ParticleSet(loc, w);
}

} // namespace

TEST_CASE("distance of a set to itself is zero") {
    std::mt19937_64 rng(11);
    ParticleSet s = randomSet(rng, 5, 2);
    DistanceReport rep = distance(s, s, DistanceParams{});
    CHECK(rep.term_mean == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(std::abs(rep.total) < 1e-10 * (std::abs(rep.term_approx) + 1.0));
}

TEST_CASE("two unit-weight singletons at distance 1") {
    // D = D_ref - 2 D_cross + D_approx + K1 D_E
    //   = 0 - 2 xlog(1) + 0 + 100 * 1 = 100.
    ParticleSet a = ParticleSet::equalWeights(Matrix::Zero(1, 1));
    ParticleSet b = ParticleSet::equalWeights(Matrix::Ones(1, 1));
    DistanceReport rep = distance(a, b, DistanceParams{});
    CHECK(rep.term_cross == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(rep.term_mean == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(rep.total == doctest::Approx(100.0).epsilon(1e-14));
}

TEST_CASE("decomposition identity and translation invariance") {
    std::mt19937_64 rng(12);
    DistanceParams params;
    for (int t = 0; t < 10; ++t) {
        ParticleSet a = randomSet(rng, 4, 3);
        ParticleSet b = randomSet(rng, 6, 3);
        DistanceReport rep = distance(a, b, params);
        const double rebuilt = rep.term_ref_ref - 2.0 * rep.term_cross +
                               rep.term_approx + params.k1 * rep.term_mean;
        CHECK(rep.total == doctest::Approx(rebuilt).epsilon(1e-12));
        CHECK(rep.term_mean >= 0.0);

        Vector shift(3);
        shift << 2.5, -1.0, 0.75;
        ParticleSet as(Matrix(a.locations().rowwise() + shift.transpose()), a.weights());
        ParticleSet bs(Matrix(b.locations().rowwise() + shift.transpose()), b.weights());
        DistanceReport shifted = distance(as, bs, params);
        CHECK(shifted.total ==
              doctest::Approx(rep.total).epsilon(1e-10));
    }
}

TEST_CASE("cross term is symmetric in the two sets") {
    std::mt19937_64 rng(13);
    ParticleSet a = randomSet(rng, 3, 2);
    ParticleSet b = randomSet(rng, 7, 2);
    DistanceParams params;
    DistanceReport ab = distance(a, b, params);
    DistanceReport ba = distance(b, a, params);
    CHECK(ab.term_cross == doctest::Approx(ba.term_cross).epsilon(1e-12));
}

TEST_CASE("dimension mismatch is rejected") {
    ParticleSet a = ParticleSet::equalWeights(Matrix::Zero(2, 2));
    ParticleSet b = ParticleSet::equalWeights(Matrix::Zero(2, 3));
    DistanceParams params;
    CHECK_THROWS_AS(distance(a, b, params), DimensionError);
    CHECK_THROWS_AS(gradient(a, b, params), DimensionError);
    CHECK_THROWS_AS(hessian(a, b, params), DimensionError);
}

TEST_CASE("gradient vanishes exactly at a perfect equal-weight fit") {
    std::mt19937_64 rng(14);
    ParticleSet s = ParticleSet::equalWeights(randomSet(rng, 6, 2).locations());
    Vector g = gradient(s, s, DistanceParams{});
    // Exact zero, not merely small: the self and reference sums are
    // accumulated in the same order.
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("singleton-vs-singleton gradient, hand evaluated") {
    // G = -4 plog(d) + K2 d with d = [1, 0]: plog(d) = 0, so G = [196, 0].
    Matrix xa(1, 2), xb(1, 2);
    xa << 1.0, 0.0;
    xb << 0.0, 0.0;
    Vector g = gradient(ParticleSet::equalWeights(xa), ParticleSet::equalWeights(xb),
                        DistanceParams{});
    CHECK(g[0] == doctest::Approx(196.0).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("gradient matches finite differences of the distance") {
    std::mt19937_64 rng(15);
    DistanceParams params;
    ParticleSet a = randomSet(rng, 3, 2);
    ParticleSet b = randomSet(rng, 5, 2);
    Vector g = gradient(a, b, params);

    const double h = 1e-6;
    Vector fd(g.size());
    for (Index k = 0; k < a.count(); ++k) {
        for (Index j = 0; j < a.dim(); ++j) {
            Matrix lp = a.locations(), lm = a.locations();
            lp(k, j) += h;
            lm(k, j) -= h;
            const double dp = distance(ParticleSet(lp, a.weights()), b, params).total;
            const double dm = distance(ParticleSet(lm, a.weights()), b, params).total;
            fd[k * a.dim() + j] = (dp - dm) / (2.0 * h);
        }
    }
    CHECK((g - fd).cwiseAbs().maxCoeff() <=
          1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
}

TEST_CASE("hessian is symmetric and matches finite differences of the gradient") {
    std::mt19937_64 rng(16);
    DistanceParams params;
    ParticleSet a = randomSet(rng, 3, 2);
    ParticleSet b = randomSet(rng, 4, 2);
    Matrix H = hessian(a, b, params);
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);

    const double h = 1e-6;
    const double scale = H.cwiseAbs().maxCoeff();
    for (Index k = 0; k < a.count(); ++k) {
        for (Index j = 0; j < a.dim(); ++j) {
            Matrix lp = a.locations(), lm = a.locations();
            lp(k, j) += h;
            lm(k, j) -= h;
            Vector gp = gradient(ParticleSet(lp, a.weights()), b, params);
            Vector gm = gradient(ParticleSet(lm, a.weights()), b, params);
            Vector fd = (gp - gm) / (2.0 * h);
            CHECK((H.col(k * a.dim() + j) - fd).cwiseAbs().maxCoeff() <=
                  1e-4 * scale);
        }
    }
}

TEST_CASE("single-particle hessian against the explicit block formula") {
    std::mt19937_64 rng(17);
    ParticleSet ref = randomSet(rng, 4, 2);
    Matrix xa(1, 2);
    xa << 0.3, -0.9;
    ParticleSet a = ParticleSet::equalWeights(xa);
    DistanceParams params;

    Matrix expected = params.k2 * Matrix::Identity(2, 2);
    for (Index j = 0; j < ref.count(); ++j) {
        Vector d = a.location(0) - ref.location(j);
        expected -= 4.0 * ref.weights()[j] * logKernelBlock(d);
    }
    Matrix H = hessian(a, ref, params);
    CHECK((H - expected).cwiseAbs().maxCoeff() < 1e-12 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("recursive hessian diagonal collapses to k2 w^2 I") {
    Matrix loc(2, 1);
    loc << 0.0, 1.0;
    ParticleSet s = ParticleSet::equalWeights(loc);
    DistanceParams params; // k2 = 196
    Matrix H = hessianRecursive(s, params);
    CHECK(H(0, 0) == doctest::Approx(49.0).epsilon(1e-14));
    CHECK(H(1, 1) == doctest::Approx(49.0).epsilon(1e-14));
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);

    // Off-diagonal blocks keep the general form of the full Hessian.
    Matrix Hfull = hessian(s, s, params);
    CHECK(H(0, 1) == doctest::Approx(Hfull(0, 1)).epsilon(1e-12));
}

TEST_CASE("coincident pairs: gradient zero contribution, hessian singular") {
    Matrix loc(2, 1);
    loc << 0.5, 0.5; // distinct particles, identical locations
    ParticleSet s = ParticleSet::equalWeights(loc);
    ParticleSet ref = ParticleSet::equalWeights(Matrix::Zero(1, 1));
    DistanceParams params;

    Vector g = gradient(s, ref, params);
    CHECK(g.allFinite());

    CHECK_THROWS_AS(hessian(s, ref, params), SingularityError);

    DistanceParams jittered = params;
    jittered.jitter_coincident = true;
    Matrix H = hessian(s, ref, jittered);
    CHECK(H.allFinite());
}
