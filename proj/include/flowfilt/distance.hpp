#ifndef FLOWFILT_DISTANCE_HPP
#define FLOWFILT_DISTANCE_HPP

#include "flowfilt/particle_set.hpp"

namespace flowfilt {

// Penalty constants of the mean-matching term. K1 weighs the squared mean
// difference inside the distance; K2 = 2*(K1 - 2) is the matching constant
// appearing in gradient and Hessian. Overriding k2 independently is allowed
// but breaks the exactness of the analytic derivatives.
struct DistanceParams {
    double k1 = 100.0;
    double k2 = 196.0; // 2 * (k1 - 2)

    // Pairs of distinct particles closer than coincidence_tol (Euclidean)
    // contribute zero to gradient terms. In the Hessian they are a hard
    // SingularityError unless jitter_coincident is set, in which case
    // jitter * I replaces the undefined kernel block.
    double coincidence_tol = 1e-14;
    bool jitter_coincident = false;
    double jitter = 1e-12;

    static DistanceParams withK1(double k1) {
        DistanceParams p;
        p.k1 = k1;
        p.k2 = 2.0 * (k1 - 2.0);
        return p;
    }
};

// The four terms of the distance. total = term_ref_ref - 2*term_cross
// + term_approx + k1*term_mean.
struct DistanceReport {
    double total;
    double term_ref_ref; // D_xtilde,xtilde
    double term_cross;   // D_x,xtilde
    double term_approx;  // D_x,x
    double term_mean;    // squared mean difference
};

// Generalized Cramer-von Mises distance between the approximating set
// (L components) and the reference set (M components). Closed form, order
// invariant, differentiable in the approximating locations.
DistanceReport distance(const ParticleSet& approx, const ParticleSet& ref,
                        const DistanceParams& params);

// Gradient of distance() w.r.t. the approximating locations, stacked
// particle-major: (dD/dx_1^T, ..., dD/dx_L^T)^T in R^{L*N}.
Vector gradient(const ParticleSet& approx, const ParticleSet& ref,
                const DistanceParams& params);

// Full Hessian of distance() w.r.t. the approximating locations, assembled
// from N x N blocks; symmetric by construction.
Matrix hessian(const ParticleSet& approx, const ParticleSet& ref,
               const DistanceParams& params);

// Hessian of the recursive flow, where the reference coincides with the
// approximating set: diagonal blocks collapse to k2 * w_k^2 * I, off-diagonal
// blocks keep the general form.
Matrix hessianRecursive(const ParticleSet& approx, const DistanceParams& params);

} // namespace flowfilt

#endif
