// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <set>

#include "emubound/error.hpp"
#include "emubound/rng.hpp"
#include "emubound/synthetic.hpp"

using namespace emubound;

namespace {

SyntheticSpec base_spec(int nlat, int nlon, int members = 8) {
    SyntheticSpec spec;
    spec.space.dims = {{"a", 0.0, 1.0}, {"b", -1.0, 2.0}, {"c", 10.0, 30.0}};
    spec.sim_grid.lat_origin = -30.0;
    spec.sim_grid.lat_step = 0.5;
    spec.sim_grid.lat_count = nlat;
    spec.sim_grid.lon_origin = 3.0;
    spec.sim_grid.lon_step = 1.0;
    spec.sim_grid.lon_count = nlon;
    spec.sim_grid.time_origin = 0;
    spec.sim_grid.time_step = 3600;
    spec.sim_grid.time_count = 1;
    spec.sat_grid = spec.sim_grid;
    spec.u_star.values = {0.4, 0.5, 20.0};
    spec.delta2 = 0.01;
    spec.meas_var = 0.02;
    spec.n_members = members;
    spec.seed = 42;
    spec.model_seed = 7;
    return spec;
}

}  // namespace

TEST_CASE("forward model is deterministic and smooth") {
    auto spec = base_spec(3, 3);
    SpaceTimePoint x{spec.sim_grid.lat_at(0), spec.sim_grid.lon_at(0), 0};
    ParameterVector u{{0.3, 0.0, 15.0}};
    CHECK(forward(spec, x, u) == forward(spec, x, u));

    // Different cells get different response surfaces.
    SpaceTimePoint x2{spec.sim_grid.lat_at(1), spec.sim_grid.lon_at(0), 0};
    CHECK(forward(spec, x, u) != forward(spec, x2, u));

    // Changing the model seed changes the surface.
    auto spec2 = base_spec(3, 3);
    spec2.model_seed = 8;
    CHECK(forward(spec, x, u) != forward(spec2, x, u));
}

TEST_CASE("forward gradient matches finite differences") {
    auto spec = base_spec(4, 4);
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        SpaceTimePoint x{spec.sim_grid.lat_at(static_cast<int>(rng.below(4))),
                         spec.sim_grid.lon_at(static_cast<int>(rng.below(4))), 0};
        ParameterVector u{{rng.uniform(0.1, 0.9), rng.uniform(-0.8, 1.8), rng.uniform(11.0, 29.0)}};
        auto grad = forward_grad(spec, x, u);
        for (std::size_t i = 0; i < 3; ++i) {
            double h = 1e-7 * (spec.space.dims[i].max - spec.space.dims[i].min);
            auto up = u, dn = u;
            up.values[i] += h;
            dn.values[i] -= h;
            double fd = (forward(spec, x, up) - forward(spec, x, dn)) / (2.0 * h);
            CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("designated cells respond monotonically to coordinate 0") {
    auto spec = base_spec(6, 6);
    int monotone_cells = 0;
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            SpaceTimePoint x{spec.sim_grid.lat_at(i), spec.sim_grid.lon_at(j), 0};
            if (!forward_is_monotone_cell(spec, x)) continue;
            ++monotone_cells;
            double prev = -1e300;
            for (double t = 0.0; t <= 1.0; t += 0.05) {
                ParameterVector u{{t, 0.3, 18.0}};
                double f = forward(spec, x, u);
                CHECK(f > prev);
                prev = f;
            }
        }
    }
    CHECK(monotone_cells > 0);  // about half the cells by construction
    CHECK(monotone_cells < 36);
}

TEST_CASE("generate is bitwise deterministic") {
    auto spec = base_spec(4, 4);
    auto a = generate(spec);
    auto b = generate(spec);
    CHECK((a.train.outputs.array() == b.train.outputs.array()).all());
    CHECK(a.obs.z == b.obs.z);
    for (std::size_t j = 0; j < a.train.inputs.size(); ++j)
        CHECK(a.train.inputs[j].values == b.train.inputs[j].values);

    auto spec2 = base_spec(4, 4);
    spec2.seed = 43;
    auto c = generate(spec2);
    CHECK(a.obs.z != c.obs.z);
}

TEST_CASE("noiseless generation reproduces the truth exactly") {
    auto spec = base_spec(4, 4);
    spec.delta2 = 0.0;
    spec.meas_var = 0.0;
    auto data = generate(spec);
    for (std::size_t i = 0; i < data.grid->size(); ++i) {
        REQUIRE(data.obs.status[i] == ObsStatus::Present);
        CHECK(data.obs.z[i] == forward(spec, data.grid->pair(i).sim, spec.u_star));
    }
}

TEST_CASE("observation noise variance matches meas_var + delta2 over 10^4 cells") {
    auto spec = base_spec(100, 100, 2);
    spec.delta2 = 0.01;
    spec.meas_var = 0.02;
    auto data = generate(spec);
    REQUIRE(data.grid->size() == 10000);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < data.grid->size(); ++i) {
        double d = data.obs.z[i] - forward(spec, data.grid->pair(i).sim, spec.u_star);
        s += d;
        s2 += d * d;
    }
    double n = static_cast<double>(data.grid->size());
    double var = s2 / n - (s / n) * (s / n);
    CHECK(var == doctest::Approx(0.03).epsilon(0.05));
}

TEST_CASE("ensemble outputs are exact forward evaluations on the matched grid") {
    auto spec = base_spec(3, 5);
    auto data = generate(spec);
    REQUIRE(data.train.n_members() == 8);
    for (std::size_t j = 0; j < 8; ++j)
        for (std::size_t i = 0; i < data.grid->size(); ++i)
            CHECK(data.train.outputs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) ==
                  forward(spec, data.grid->pair(i).sim, data.train.inputs[j]));
}

TEST_CASE("planted outliers shift selected present cells") {
    auto spec = base_spec(10, 10);
    spec.planted_outliers = 5;
    spec.outlier_shift_sigmas = 10.0;
    auto data = generate(spec);
    REQUIRE(data.truth.outlier_cells.size() == 5);

    auto clean_spec = spec;
    clean_spec.planted_outliers = 0;
    auto clean = generate(clean_spec);

    std::set<SpaceTimePoint> outliers(data.truth.outlier_cells.begin(), data.truth.outlier_cells.end());
    double shift = 10.0 * std::sqrt(spec.meas_var + spec.delta2);
    for (std::size_t i = 0; i < data.grid->size(); ++i) {
        double expect = clean.obs.z[i] + (outliers.count(data.grid->pair(i).sim) ? shift : 0.0);
        CHECK(data.obs.z[i] == doctest::Approx(expect).epsilon(1e-15));
    }
}

TEST_CASE("missing fraction marks cells missing and records them") {
    auto spec = base_spec(20, 20);
    spec.missing_fraction = 0.25;
    auto data = generate(spec);
    std::size_t missing = 0;
    for (auto s : data.obs.status)
        if (s == ObsStatus::Missing) ++missing;
    CHECK(missing == data.truth.missing_cells.size());
    CHECK(missing > 50);
    CHECK(missing < 150);
}

TEST_CASE("truth record round-trips through JSON") {
    auto spec = base_spec(4, 4);
    spec.planted_outliers = 2;
    auto data = generate(spec);
    const char* path = "test_truth_tmp.json";
    save_truth(path, data.truth, "cafe");
    auto loaded = load_truth(path);
    CHECK(loaded.u_star.values == data.truth.u_star.values);
    CHECK(loaded.delta2 == data.truth.delta2);
    CHECK(loaded.seed == data.truth.seed);
    CHECK(loaded.model_seed == data.truth.model_seed);
    REQUIRE(loaded.outlier_cells.size() == 2);
    CHECK(loaded.outlier_cells[0] == data.truth.outlier_cells[0]);
    std::remove(path);
}

TEST_CASE("generate validates its spec") {
    auto spec = base_spec(2, 2);
    spec.u_star.values = {5.0, 0.0, 20.0};
    CHECK_THROWS_AS(generate(spec), RangeViolation);
    spec = base_spec(2, 2);
    spec.n_members = 1;
    CHECK_THROWS_AS(generate(spec), DomainError);
    spec = base_spec(2, 2);
    spec.family = "unknown";
    CHECK_THROWS_AS(generate(spec), DomainError);
}
