// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

namespace emubound {

struct BrentResult {
    double x = 0.0;
    double value = 0.0;
    int evaluations = 0;
};

// Derivative-free scalar maximization on [lo, hi]: parabolic interpolation with
// golden-section fallback, then an explicit endpoint comparison so boundary
// optima are returned exactly. abs_tol is the absolute tolerance on x.
BrentResult brent_maximize(const std::function<double(double)>& f, double lo, double hi, double abs_tol,
                           int max_iter = 200);

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed, StartInfeasible };

struct LbfgsResult {
    std::vector<double> x;
    double value = 0.0;
    LbfgsStatus status = LbfgsStatus::Converged;
    int iterations = 0;
    int evaluations = 0;
};

struct LbfgsConfig {
    int max_iter = 200;
    int history = 8;
    double gtol = 1e-6;    // sup-norm of the projected gradient
    double ftol = 1e-12;   // relative objective change
    int max_linesearch = 40;
};

// Objective returns the value and fills grad (same length as x). Return -inf to
// reject a point (e.g. a failed factorization); the line search backs off.
using GradObjective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

// Box-constrained quasi-Newton ascent: L-BFGS two-loop direction, gradient
// projection onto [lower, upper], Armijo backtracking along the projected path.
// Bounds may be +/-infinity. Deterministic: no randomness, fixed evaluation order.
LbfgsResult lbfgsb_maximize(const GradObjective& f, std::vector<double> x0, const std::vector<double>& lower,
                            const std::vector<double>& upper, const LbfgsConfig& config = {});

}  // namespace emubound
