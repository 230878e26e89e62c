#ifndef FLOWFILT_SELFTEST_HPP
#define FLOWFILT_SELFTEST_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace flowfilt {

struct GradcheckOptions {
    int trials = 100;
    int max_dim = 3;    // N in {1..max_dim}
    int max_count = 8;  // L, M in {1..max_count}
    std::uint64_t seed = 20250903;
    double grad_tol = 1e-5;
    double hess_tol = 1e-4;
    double j_tol = 1e-5;
};

struct GradcheckResult {
    int trials = 0;
    double worst_grad = 0.0;
    double worst_hess = 0.0;
    double worst_j = 0.0;
    bool pass = true;
    std::uint64_t failing_seed = 0;  // per-instance seed of the worst violation
};

// Randomized finite-difference validation of distance gradient, Hessian and
// J-vectors.
GradcheckResult runGradcheck(const GradcheckOptions& opts);

struct CheckResult {
    std::string name;
    bool pass;
    std::string detail;
    double seconds;
};

// Names of the oracle self-checks, in execution order.
std::vector<std::string> selftestNames();

// Runs every self-check (derivative correctness, Kalman oracles, degeneracy
// comparison, conservation, chained updates, integrator order, reduction
// quality, determinism, runtime envelope).
std::vector<CheckResult> runSelftest();

} // namespace flowfilt

#endif
