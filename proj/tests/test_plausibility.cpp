// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "emubound/error.hpp"
#include "emubound/plausibility.hpp"
#include "emubound/rng.hpp"
#include "emubound/stats.hpp"

using namespace emubound;

namespace {

struct Fixture {
    std::shared_ptr<const MatchedGrid> grid;
    PredictionTable preds;
    ObservationSet obs;
    MStar mstar;
};

Fixture make_fixture(const std::vector<std::vector<double>>& means_per_k,
                     const std::vector<double>& var_emu, const std::vector<double>& z,
                     const std::vector<double>& meas_var) {
    const auto m = z.size();
    RegularGrid g;
    g.lat_origin = 0.0;
    g.lat_step = 0.25;
    g.lat_count = static_cast<int>(m);
    g.lon_count = 1;
    g.time_count = 1;
    g.time_step = 60;
    Fixture f;
    f.grid = std::make_shared<const MatchedGrid>(match_grids(g, g));
    f.preds.cell_indices.resize(m);
    for (std::size_t i = 0; i < m; ++i) f.preds.cell_indices[i] = static_cast<int>(i);
    f.preds.tests.resize(means_per_k.size());
    for (auto& t : f.preds.tests) t.values = {0.0};
    f.preds.mean.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(means_per_k.size()));
    f.preds.var.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(means_per_k.size()));
    for (std::size_t k = 0; k < means_per_k.size(); ++k)
        for (std::size_t i = 0; i < m; ++i) {
            f.preds.mean(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = means_per_k[k][i];
            f.preds.var(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = var_emu[i];
        }
    f.obs.grid = f.grid;
    f.obs.status.assign(m, ObsStatus::Present);
    f.obs.z = z;
    f.obs.meas_var = meas_var;
    f.mstar.cells = f.preds.cell_indices;
    return f;
}

}  // namespace

TEST_CASE("implausibility closed forms") {
    SUBCASE("unit standardized residuals over m cells give sqrt(m)") {
        const std::size_t m = 9;
        std::vector<double> mean(m, 1.0), z(m, 0.0), var0(m, 0.5), meas(m, 0.25);
        auto f = make_fixture({mean}, var0, z, meas);
        CHECK(implausibility(0, f.preds, f.obs, f.mstar, 0.25) ==
              doctest::Approx(3.0).epsilon(1e-14));
    }
    SUBCASE("single cell, residual 3, total variance 9 gives 1") {
        auto f = make_fixture({{3.0}}, {4.0}, {0.0}, {3.0});
        CHECK(implausibility(0, f.preds, f.obs, f.mstar, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("zero iff all means equal observations") {
        std::vector<double> z{0.1, 0.2, 0.3};
        auto f = make_fixture({z, {0.1, 0.2, 0.30001}}, {0.01, 0.01, 0.01}, z, {0.0, 0.0, 0.0});
        CHECK(implausibility(0, f.preds, f.obs, f.mstar, 0.0) == 0.0);
        CHECK(implausibility(1, f.preds, f.obs, f.mstar, 0.0) > 0.0);
    }
    SUBCASE("errors") {
        auto f = make_fixture({{1.0}}, {0.0}, {0.0}, {0.0});
        CHECK_THROWS_AS(implausibility(0, f.preds, f.obs, f.mstar, 0.0), DomainError);
        MStar empty;
        CHECK_THROWS_AS(implausibility(0, f.preds, f.obs, empty, 1.0), DomainError);
    }
}

TEST_CASE("implausibility is monotone nonincreasing in delta2") {
    Rng rng(15);
    const std::size_t m = 50;
    std::vector<double> mean(m), z(m, 0.0), var0(m, 0.01), meas(m, 0.02);
    for (auto& v : mean) v = rng.uniform(-1.0, 1.0);
    auto f = make_fixture({mean}, var0, z, meas);
    double prev = implausibility(0, f.preds, f.obs, f.mstar, 0.0);
    for (double d2 : {0.01, 0.1, 1.0, 10.0}) {
        double v = implausibility(0, f.preds, f.obs, f.mstar, d2);
        CHECK(v <= prev);
        prev = v;
    }
}

TEST_CASE("critical values") {
    CHECK(critical_value(1, 0.05) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(critical_value(100, 0.05) == doctest::Approx(std::sqrt(124.34211340400407)).epsilon(1e-12));
    // level -> 1 drives the critical value toward zero
    CHECK(critical_value(5, 0.999999) < critical_value(5, 0.9));
    CHECK(critical_value(5, 0.9) < critical_value(5, 0.05));
    CHECK(critical_value(1, 1.0 - 1e-12) < 1e-5);
    CHECK_THROWS_AS(critical_value(0, 0.05), DomainError);
    CHECK_THROWS_AS(critical_value(5, 0.0), DomainError);
    CHECK_THROWS_AS(critical_value(5, 1.0), DomainError);
}

TEST_CASE("test_all produces one outcome per test with shared critical value") {
    Rng rng(8);
    const std::size_t m = 20;
    std::vector<std::vector<double>> means;
    for (int k = 0; k < 6; ++k) {
        std::vector<double> mk(m);
        for (auto& v : mk) v = rng.uniform(-0.2, 0.2);
        means.push_back(mk);
    }
    std::vector<double> z(m, 0.0), var0(m, 0.01), meas(m, 0.01);
    auto f = make_fixture(means, var0, z, meas);
    auto outcomes = test_all(f.preds, f.obs, f.mstar, 0.005, 0.05, 1);
    REQUIRE(outcomes.size() == 6);
    double crit = critical_value(20, 0.05);
    for (const auto& o : outcomes) {
        CHECK(o.df == 20);
        CHECK(o.level == 0.05);
        CHECK(o.critical == crit);
        CHECK(o.reject == (o.statistic > o.critical));
        CHECK(o.statistic == implausibility(o.k, f.preds, f.obs, f.mstar, 0.005));
    }
    auto parallel = test_all(f.preds, f.obs, f.mstar, 0.005, 0.05, 4);
    for (std::size_t k = 0; k < 6; ++k) CHECK(outcomes[k].statistic == parallel[k].statistic);
}

TEST_CASE("rejection set is monotone in the level") {
    Rng rng(12);
    const std::size_t m = 30;
    std::vector<std::vector<double>> means;
    for (int k = 0; k < 40; ++k) {
        std::vector<double> mk(m);
        for (auto& v : mk) v = rng.uniform(-0.4, 0.4);
        means.push_back(mk);
    }
    std::vector<double> z(m, 0.0), var0(m, 0.02), meas(m, 0.02);
    auto f = make_fixture(means, var0, z, meas);
    std::vector<bool> prev_reject(40, false);
    for (double level : {0.01, 0.05, 0.2, 0.5}) {
        auto outcomes = test_all(f.preds, f.obs, f.mstar, 0.0, level, 1);
        for (std::size_t k = 0; k < 40; ++k) {
            if (prev_reject[k]) CHECK(outcomes[k].reject);  // higher level keeps rejecting
            prev_reject[k] = outcomes[k].reject;
        }
    }
}

TEST_CASE("null calibration: rejection rate about the level under exact data") {
    // Data generated exactly under the additive-noise model at the true u*:
    // the squared statistic is chi-square(m) by construction.
    Rng rng(2027);
    const std::size_t m = 200;
    const int reps = 1000;
    const double level = 0.05;
    std::vector<double> var0(m, 0.0), meas(m, 0.02);
    const double delta2 = 0.01;
    int rejects = 0;
    std::vector<double> stats;
    stats.reserve(reps);
    for (int rep = 0; rep < reps; ++rep) {
        std::vector<double> mean(m, 0.0), z(m);
        for (std::size_t i = 0; i < m; ++i) z[i] = std::sqrt(meas[i] + delta2) * rng.normal();
        auto f = make_fixture({mean}, var0, z, meas);
        auto outcomes = test_all(f.preds, f.obs, f.mstar, delta2, level, 1);
        rejects += outcomes[0].reject ? 1 : 0;
        stats.push_back(outcomes[0].statistic);
    }
    double rate = static_cast<double>(rejects) / reps;
    CHECK(rate > 0.03);
    CHECK(rate < 0.07);

    // Kolmogorov-Smirnov distance between the empirical statistic distribution
    // and sqrt(chi-square(m)) below 0.05 at 1000 replications.
    std::sort(stats.begin(), stats.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        double x = stats[i];
        double cdf = chi_squared_cdf(static_cast<int>(m), x * x);
        double hi = static_cast<double>(i + 1) / reps;
        double lo = static_cast<double>(i) / reps;
        ks = std::max(ks, std::max(std::abs(cdf - hi), std::abs(cdf - lo)));
    }
    CHECK(ks < 0.05);
}
