// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>

#include "emubound/error.hpp"
#include "emubound/optim.hpp"

using namespace emubound;

TEST_CASE("brent finds interior maxima") {
    auto res = brent_maximize([](double x) { return -(x - 1.3) * (x - 1.3); }, 0.0, 5.0, 1e-12);
    CHECK(res.x == doctest::Approx(1.3).epsilon(1e-9));
    CHECK(res.value == doctest::Approx(0.0).epsilon(1e-15));

    auto bumpy = brent_maximize([](double x) { return std::sin(x); }, 0.0, 3.0, 1e-12);
    CHECK(bumpy.x == doctest::Approx(M_PI / 2).epsilon(1e-9));
}

TEST_CASE("brent returns boundary optima exactly") {
    auto lo = brent_maximize([](double x) { return -x; }, 0.0, 4.0, 1e-10);
    CHECK(lo.x == 0.0);
    CHECK(lo.value == 0.0);
    auto hi = brent_maximize([](double x) { return x; }, 0.0, 4.0, 1e-10);
    CHECK(hi.x == 4.0);
    CHECK(hi.value == 4.0);
}

TEST_CASE("brent handles nonsmooth objectives") {
    auto res = brent_maximize([](double x) { return -std::abs(x - 0.7); }, 0.0, 2.0, 1e-11);
    CHECK(res.x == doctest::Approx(0.7).epsilon(1e-8));
}

TEST_CASE("brent rejects bad input") {
    CHECK_THROWS_AS(brent_maximize([](double) { return 0.0; }, 1.0, 0.0, 1e-8), OptError);
    CHECK_THROWS_AS(brent_maximize([](double) { return std::nan(""); }, 0.0, 1.0, 1e-8), OptError);
}

namespace {

GradObjective neg_quadratic(const std::vector<double>& center) {
    return [center](const std::vector<double>& x, std::vector<double>& g) {
        double v = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double d = x[i] - center[i];
            v -= d * d;
            g[i] = -2.0 * d;
        }
        return v;
    };
}

}  // namespace

TEST_CASE("lbfgsb maximizes a bounded quadratic, interior optimum") {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> lower(3, -inf), upper(3, inf);
    auto res = lbfgsb_maximize(neg_quadratic({1.0, -2.0, 0.5}), {0.0, 0.0, 0.0}, lower, upper);
    CHECK(res.status == LbfgsStatus::Converged);
    CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.x[1] == doctest::Approx(-2.0).epsilon(1e-6));
    CHECK(res.x[2] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("lbfgsb respects active box constraints") {
    std::vector<double> lower{0.0, 0.0}, upper{0.5, 3.0};
    auto res = lbfgsb_maximize(neg_quadratic({1.0, 2.0}), {0.1, 0.1}, lower, upper);
    CHECK(res.x[0] == doctest::Approx(0.5).epsilon(1e-8));  // clamped
    CHECK(res.x[1] == doctest::Approx(2.0).epsilon(1e-6));  // interior
}

TEST_CASE("lbfgsb solves box-constrained rosenbrock") {
    auto rosen = [](const std::vector<double>& x, std::vector<double>& g) {
        double a = 1.0 - x[0];
        double b = x[1] - x[0] * x[0];
        g[0] = 2.0 * a + 400.0 * x[0] * b;
        g[1] = -200.0 * b;
        return -(a * a + 100.0 * b * b);
    };
    LbfgsConfig config;
    config.max_iter = 800;
    config.ftol = 0.0;
    config.gtol = 1e-9;
    auto res = lbfgsb_maximize(rosen, {-1.2, 1.0}, {-2.0, -2.0}, {2.0, 2.0}, config);
    CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(res.x[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("lbfgsb is deterministic") {
    auto r1 = lbfgsb_maximize(neg_quadratic({0.3, 0.4}), {0.0, 0.0}, {-1.0, -1.0}, {1.0, 1.0});
    auto r2 = lbfgsb_maximize(neg_quadratic({0.3, 0.4}), {0.0, 0.0}, {-1.0, -1.0}, {1.0, 1.0});
    CHECK(r1.x == r2.x);
    CHECK(r1.value == r2.value);
    CHECK(r1.evaluations == r2.evaluations);
}

TEST_CASE("lbfgsb reports an infeasible start") {
    auto inf_obj = [](const std::vector<double>&, std::vector<double>& g) {
        g[0] = 0.0;
        return -std::numeric_limits<double>::infinity();
    };
    auto res = lbfgsb_maximize(inf_obj, {0.0}, {-1.0}, {1.0});
    CHECK(res.status == LbfgsStatus::StartInfeasible);
}
