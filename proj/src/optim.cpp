// SPDX-License-Identifier: Apache-2.0
#include "emubound/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "emubound/error.hpp"

namespace emubound {

namespace {
constexpr double kGolden = 0.3819660112501051;  // (3 - sqrt(5)) / 2
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

BrentResult brent_maximize(const std::function<double(double)>& f, double lo, double hi, double abs_tol,
                           int max_iter) {
    if (!(hi >= lo)) throw OptError("brent_maximize: empty interval");
    if (!(abs_tol > 0.0)) throw OptError("brent_maximize: tolerance must be positive");

    int evals = 0;
    auto eval = [&](double x) {
        double v = f(x);
        ++evals;
        if (std::isnan(v)) throw OptError("brent_maximize: objective returned NaN at x=" + std::to_string(x));
        return v;
    };

    if (hi == lo) return {lo, eval(lo), evals};

    // Minimize -f with the classic Brent scheme (Numerical-Recipes-style state).
    auto g = [&](double x) { return -eval(x); };

    double a = lo, b = hi;
    double x = a + kGolden * (b - a);
    double w = x, v = x;
    double fx = g(x), fw = fx, fv = fx;
    double d = 0.0, e = 0.0;

    for (int iter = 0; iter < max_iter; ++iter) {
        double xm = 0.5 * (a + b);
        double tol1 = abs_tol;
        double tol2 = 2.0 * tol1;
        if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;

        bool use_golden = true;
        if (std::abs(e) > tol1) {
            // Parabolic fit through (x, w, v).
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::abs(q);
            double etmp = e;
            e = d;
            if (std::abs(p) < std::abs(0.5 * q * etmp) && p > q * (a - x) && p < q * (b - x)) {
                d = p / q;
                double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (xm >= x) ? tol1 : -tol1;
                use_golden = false;
            }
        }
        if (use_golden) {
            e = (x >= xm) ? a - x : b - x;
            d = kGolden * e;
        }

        double u = (std::abs(d) >= tol1) ? x + d : x + ((d >= 0.0) ? tol1 : -tol1);
        double fu = g(u);
        if (fu <= fx) {
            if (u >= x) {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if (u < x) {
                a = u;
            } else {
                b = u;
            }
            if (fu <= fw || w == x) {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u;
                fv = fu;
            }
        }
    }

    // Boundary optima are permitted: compare against both interval ends.
    double best_x = x;
    double best_v = -fx;
    double flo = eval(lo);
    if (flo > best_v || (flo == best_v && lo < best_x)) {
        best_v = flo;
        best_x = lo;
    }
    double fhi = eval(hi);
    if (fhi > best_v) {
        best_v = fhi;
        best_x = hi;
    }
    if (std::isinf(best_v) && best_v < 0)
        throw OptError("brent_maximize: objective is -inf over the whole bracket");
    return {best_x, best_v, evals};
}

namespace {

void project(std::vector<double>& x, const std::vector<double>& lo, const std::vector<double>& hi) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
}

// Gradient of the ascent objective, with components pointing out of the box zeroed.
double projected_gradient_norm(const std::vector<double>& x, const std::vector<double>& g,
                               const std::vector<double>& lo, const std::vector<double>& hi) {
    double norm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double gi = g[i];
        if (x[i] <= lo[i] && gi < 0.0) gi = 0.0;
        if (x[i] >= hi[i] && gi > 0.0) gi = 0.0;
        norm = std::max(norm, std::abs(gi));
    }
    return norm;
}

}  // namespace

LbfgsResult lbfgsb_maximize(const GradObjective& f, std::vector<double> x0, const std::vector<double>& lower,
                            const std::vector<double>& upper, const LbfgsConfig& config) {
    const std::size_t n = x0.size();
    if (lower.size() != n || upper.size() != n) throw OptError("lbfgsb_maximize: bound dimensions disagree");
    for (std::size_t i = 0; i < n; ++i)
        if (!(lower[i] <= upper[i])) throw OptError("lbfgsb_maximize: lower bound exceeds upper bound");

    project(x0, lower, upper);

    LbfgsResult res;
    res.x = x0;

    std::vector<double> g(n), g_new(n);
    auto eval = [&](const std::vector<double>& x, std::vector<double>& grad) {
        ++res.evaluations;
        return f(x, grad);
    };

    double fx = eval(x0, g);
    if (!std::isfinite(fx)) {
        res.status = LbfgsStatus::StartInfeasible;
        res.value = fx;
        return res;
    }

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::vector<double> x = x0;

    for (int iter = 0; iter < config.max_iter; ++iter) {
        res.iterations = iter + 1;

        if (projected_gradient_norm(x, g, lower, upper) <= config.gtol) {
            res.status = LbfgsStatus::Converged;
            break;
        }

        // Two-loop recursion on the ascent gradient.
        std::vector<double> d = g;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t i = s_hist.size(); i-- > 0;) {
            double a = 0.0;
            for (std::size_t j = 0; j < n; ++j) a += s_hist[i][j] * d[j];
            a *= rho_hist[i];
            alpha[i] = a;
            for (std::size_t j = 0; j < n; ++j) d[j] -= a * y_hist[i][j];
        }
        if (!s_hist.empty()) {
            double sy = 1.0 / rho_hist.back();
            double yy = 0.0;
            for (std::size_t j = 0; j < n; ++j) yy += y_hist.back()[j] * y_hist.back()[j];
            if (yy > 0.0) {
                double scale = sy / yy;
                for (std::size_t j = 0; j < n; ++j) d[j] *= scale;
            }
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            double b = 0.0;
            for (std::size_t j = 0; j < n; ++j) b += y_hist[i][j] * d[j];
            b *= rho_hist[i];
            for (std::size_t j = 0; j < n; ++j) d[j] += s_hist[i][j] * (alpha[i] - b);
        }

        // Ascent check on the projected path; fall back to the gradient if needed.
        double dg = 0.0;
        for (std::size_t j = 0; j < n; ++j) dg += d[j] * g[j];
        if (!(dg > 0.0)) {
            d = g;
            dg = 0.0;
            for (std::size_t j = 0; j < n; ++j) dg += g[j] * g[j];
            if (dg == 0.0) {
                res.status = LbfgsStatus::Converged;
                break;
            }
        }

        // Backtracking Armijo search along x(t) = P(x + t d).
        double step = 1.0;
        bool accepted = false;
        std::vector<double> x_new(n);
        double fx_new = -kInf;
        for (int ls = 0; ls < config.max_linesearch; ++ls) {
            for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] + step * d[j];
            project(x_new, lower, upper);

            // Directional derivative along the actually-taken (projected) step.
            double gs = 0.0;
            double step_norm2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                double sj = x_new[j] - x[j];
                gs += g[j] * sj;
                step_norm2 += sj * sj;
            }
            if (step_norm2 == 0.0) break;  // fully blocked by the box

            fx_new = eval(x_new, g_new);
            if (std::isfinite(fx_new) && fx_new >= fx + 1e-4 * gs) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }

        if (!accepted) {
            res.status = LbfgsStatus::LineSearchFailed;
            break;
        }

        // Curvature update (ascent form: y = g_old - g_new so that s'y > 0 on concave stretches).
        std::vector<double> s(n), y(n);
        double sy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = x_new[j] - x[j];
            y[j] = g[j] - g_new[j];
            sy += s[j] * y[j];
        }
        if (sy > 1e-12) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > config.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        double df = std::abs(fx_new - fx);
        x = x_new;
        g = g_new;
        bool f_converged = df <= config.ftol * (std::abs(fx) + 1.0);
        fx = fx_new;
        if (f_converged) {
            res.status = LbfgsStatus::Converged;
            break;
        }
        if (iter + 1 == config.max_iter) res.status = LbfgsStatus::MaxIterations;
    }

    res.x = x;
    res.value = fx;
    return res;
}

}  // namespace emubound
