#include "flowfilt/distance.hpp"

#include <cmath>
#include <string>

#include "flowfilt/kernels.hpp"

namespace flowfilt {

namespace {

void checkDims(const ParticleSet& approx, const ParticleSet& ref) {
    if (approx.dim() != ref.dim()) {
        throw DimensionError("approximating and reference sets differ in dimension (" +
                             std::to_string(approx.dim()) + " vs " +
                             std::to_string(ref.dim()) + ")");
    }
}

// sum_ij wa_i wb_j xlog(||A_i - B_j||^2), compensated accumulation.
double pairTerm(const Matrix& a, const Vector& wa, const Matrix& b, const Vector& wb) {
    KahanSum acc;
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < b.rows(); ++j) {
            const double n2 = (a.row(i) - b.row(j)).squaredNorm();
            if (n2 > 0.0) {
                acc.add(wa[i] * wb[j] * n2 * std::log(n2));
            }
        }
    }
    return acc.value();
}

} // namespace

DistanceReport distance(const ParticleSet& approx, const ParticleSet& ref,
                        const DistanceParams& params) {
    checkDims(approx, ref);
    DistanceReport rep{};
    rep.term_approx = pairTerm(approx.locations(), approx.weights(),
                               approx.locations(), approx.weights());
    rep.term_cross = pairTerm(approx.locations(), approx.weights(),
                              ref.locations(), ref.weights());
    rep.term_ref_ref = pairTerm(ref.locations(), ref.weights(),
                                ref.locations(), ref.weights());
    rep.term_mean = (approx.mean() - ref.mean()).squaredNorm();
    rep.total = rep.term_ref_ref - 2.0 * rep.term_cross + rep.term_approx +
                params.k1 * rep.term_mean;
    return rep;
}

Vector gradient(const ParticleSet& approx, const ParticleSet& ref,
                const DistanceParams& params) {
    checkDims(approx, ref);
    const Index L = approx.count();
    const Index M = ref.count();
    const Index N = approx.dim();
    const Matrix& x = approx.locations();
    const Matrix& xt = ref.locations();
    const Vector& w = approx.weights();
    const Vector& wt = ref.weights();
    const double tol2 = params.coincidence_tol * params.coincidence_tol;

    const Vector mean_diff = approx.mean() - ref.mean();
    Vector grad(L * N);
    Vector d(N);
    for (Index k = 0; k < L; ++k) {
        // The two sums are accumulated separately and in the same index
        // order, so that for a perfect fit (ref == approx) they are
        // bit-identical and the gradient vanishes exactly.
        Vector acc_self = Vector::Zero(N);
        for (Index i = 0; i < L; ++i) {
            if (i == k) continue;
            d = (x.row(k) - x.row(i)).transpose();
            acc_self += w[i] * plog(d, tol2);
        }
        Vector acc_ref = Vector::Zero(N);
        for (Index j = 0; j < M; ++j) {
            d = (x.row(k) - xt.row(j)).transpose();
            acc_ref += wt[j] * plog(d, tol2);
        }
        grad.segment(k * N, N) =
            4.0 * w[k] * (acc_self - acc_ref) + params.k2 * w[k] * mean_diff;
    }
    return grad;
}

namespace {

// Kernel block with the coincidence policy applied: jitter when enabled,
// SingularityError otherwise.
Matrix guardedKernel(const Vector& d, const DistanceParams& params,
                     Index a, Index b, const char* which) {
    if (d.norm() < params.coincidence_tol) {
        if (params.jitter_coincident) {
            return params.jitter * Matrix::Identity(d.size(), d.size());
        }
        throw SingularityError(std::string("coincident particle pair (") + which + " " +
                               std::to_string(a) + ", " + std::to_string(b) +
                               ") makes the Hessian log kernel singular");
    }
    return logKernelBlock(d);
}

} // namespace

Matrix hessian(const ParticleSet& approx, const ParticleSet& ref,
               const DistanceParams& params) {
    checkDims(approx, ref);
    const Index L = approx.count();
    const Index M = ref.count();
    const Index N = approx.dim();
    const Matrix& x = approx.locations();
    const Matrix& xt = ref.locations();
    const Vector& w = approx.weights();
    const Vector& wt = ref.weights();
    const Matrix eye = Matrix::Identity(N, N);

    Matrix hess = Matrix::Zero(L * N, L * N);
    // Off-diagonal blocks; each kernel is shared by (k,l) and (l,k).
    for (Index k = 0; k < L; ++k) {
        for (Index l = k + 1; l < L; ++l) {
            const Vector d = (x.row(k) - x.row(l)).transpose();
            const Matrix block =
                params.k2 * w[k] * w[l] * eye -
                4.0 * w[k] * w[l] * guardedKernel(d, params, k, l, "approx");
            hess.block(k * N, l * N, N, N) = block;
            hess.block(l * N, k * N, N, N) = block.transpose();
        }
    }
    // Diagonal blocks.
    for (Index k = 0; k < L; ++k) {
        Matrix block = params.k2 * w[k] * w[k] * eye;
        for (Index i = 0; i < L; ++i) {
            if (i == k) continue;
            const Vector d = (x.row(k) - x.row(i)).transpose();
            block += 4.0 * w[k] * w[i] * guardedKernel(d, params, k, i, "approx");
        }
        for (Index j = 0; j < M; ++j) {
            const Vector d = (x.row(k) - xt.row(j)).transpose();
            if (d.norm() < params.coincidence_tol) {
                // Shared location between approx particle k and reference
                // particle j: the pair contributes nothing under the plog
                // convention, matching the gradient.
                continue;
            }
            block -= 4.0 * w[k] * wt[j] * logKernelBlock(d);
        }
        hess.block(k * N, k * N, N, N) = block;
    }
    return hess;
}

Matrix hessianRecursive(const ParticleSet& approx, const DistanceParams& params) {
    const Index L = approx.count();
    const Index N = approx.dim();
    const Matrix& x = approx.locations();
    const Vector& w = approx.weights();
    const Matrix eye = Matrix::Identity(N, N);

    Matrix hess = Matrix::Zero(L * N, L * N);
    for (Index k = 0; k < L; ++k) {
        // Reference terms cancel against the approx self-terms when the
        // reference is the set itself, leaving only the mean penalty.
        hess.block(k * N, k * N, N, N) = params.k2 * w[k] * w[k] * eye;
        for (Index l = k + 1; l < L; ++l) {
            const Vector d = (x.row(k) - x.row(l)).transpose();
            const Matrix block =
                params.k2 * w[k] * w[l] * eye -
                4.0 * w[k] * w[l] * guardedKernel(d, params, k, l, "approx");
            hess.block(k * N, l * N, N, N) = block;
            hess.block(l * N, k * N, N, N) = block.transpose();
        }
    }
    return hess;
}

} // namespace flowfilt
