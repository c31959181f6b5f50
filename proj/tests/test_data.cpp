// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "emubound/data.hpp"
#include "emubound/error.hpp"

using namespace emubound;

namespace {

std::shared_ptr<const MatchedGrid> tiny_grid(int nlat = 2, int nlon = 2) {
    RegularGrid g;
    g.lat_origin = 0.0;
    g.lat_step = 1.0;
    g.lat_count = nlat;
    g.lon_origin = 10.0;
    g.lon_step = 1.5;
    g.lon_count = nlon;
    g.time_origin = 100;
    g.time_step = 60;
    g.time_count = 1;
    return std::make_shared<const MatchedGrid>(match_grids(g, g));
}

ParameterSpace tiny_space() {
    ParameterSpace s;
    s.dims = {{"alpha", 0.0, 1.0}, {"beta", -2.0, 3.0}};
    return s;
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("parameter space validation") {
    ParameterSpace bad;
    bad.dims = {{"x", 1.0, 1.0}};
    CHECK_THROWS_AS(bad.validate(), SchemaError);
    ParameterSpace dup;
    dup.dims = {{"x", 0.0, 1.0}, {"x", 0.0, 2.0}};
    CHECK_THROWS_AS(dup.validate(), SchemaError);
    CHECK_THROWS_AS(validate_in_space(tiny_space(), ParameterVector{{2.0, 0.0}}), RangeViolation);
    CHECK_THROWS_AS(validate_in_space(tiny_space(), ParameterVector{{0.5}}), SchemaError);
}

TEST_CASE("parameter space JSON round-trip") {
    TempFile f("test_space_tmp.json");
    auto space = tiny_space();
    save_parameter_space(f.path, space);
    auto loaded = load_parameter_space(f.path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded.dims[0].name == "alpha");
    CHECK(loaded.dims[1].min == -2.0);
    CHECK(loaded.dims[1].max == 3.0);
}

TEST_CASE("ensemble CSV round-trips exactly") {
    auto grid = tiny_grid();
    auto space = tiny_space();
    TrainingSet train;
    train.grid = grid;
    train.inputs = {{{0.25, -1.5}}, {{0.75, 2.125}}, {{1.0 / 3.0, 0.1}}};
    train.outputs.resize(3, static_cast<Eigen::Index>(grid->size()));
    double v = 0.1;
    for (Eigen::Index r = 0; r < 3; ++r)
        for (Eigen::Index c = 0; c < train.outputs.cols(); ++c) train.outputs(r, c) = (v += 0.0371);

    TempFile f("test_ensemble_tmp.csv");
    save_ensemble(f.path, space, train);
    auto loaded = load_ensemble(f.path, space, grid);
    REQUIRE(loaded.n_members() == 3);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(loaded.inputs[j].values == train.inputs[j].values);
        for (Eigen::Index c = 0; c < train.outputs.cols(); ++c)
            CHECK(loaded.outputs(static_cast<Eigen::Index>(j), c) ==
                  train.outputs(static_cast<Eigen::Index>(j), c));
    }
}

TEST_CASE("ensemble loader rejects bad files") {
    auto grid = tiny_grid();
    auto space = tiny_space();

    SUBCASE("single member") {
        TempFile f("test_ens_one.csv");
        {
            std::ofstream out(f.path);
            out << "member,param:alpha,param:beta";
            for (const auto& pr : grid->pairs()) out << ",cell:" << pr.sim.key();
            out << "\n0,0.5,0.5,1,1,1,1\n";
        }
        CHECK_THROWS_AS(load_ensemble(f.path, space, grid), SchemaError);
    }
    SUBCASE("out-of-range parameter") {
        TempFile f("test_ens_range.csv");
        {
            std::ofstream out(f.path);
            out << "member,param:alpha,param:beta";
            for (const auto& pr : grid->pairs()) out << ",cell:" << pr.sim.key();
            out << "\n0,0.5,0.5,1,1,1,1\n1,7.0,0.5,1,1,1,1\n";
        }
        CHECK_THROWS_AS(load_ensemble(f.path, space, grid), RangeViolation);
    }
    SUBCASE("missing cell column") {
        TempFile f("test_ens_cell.csv");
        {
            std::ofstream out(f.path);
            out << "member,param:alpha,param:beta,cell:" << grid->pair(0).sim.key();
            out << "\n0,0.5,0.5,1\n1,0.6,0.5,1\n";
        }
        CHECK_THROWS_AS(load_ensemble(f.path, space, grid), SchemaError);
    }
}

TEST_CASE("observation CSV round-trip with missing and absent cells") {
    auto grid = tiny_grid();
    ObservationSet obs;
    obs.grid = grid;
    obs.status = {ObsStatus::Present, ObsStatus::Missing, ObsStatus::Present, ObsStatus::Absent};
    obs.z = {0.3, 0.0, 0.41237891234, 0.0};
    obs.meas_var = {0.027, 0.0, 0.031, 0.0};

    TempFile f("test_obs_tmp.csv");
    save_observations(f.path, obs);
    auto loaded = load_observations(f.path, grid);
    CHECK(loaded.status == obs.status);
    CHECK(loaded.z[0] == 0.3);
    CHECK(loaded.meas_var[0] == 0.027);
    CHECK(loaded.z[2] == 0.41237891234);
    CHECK(loaded.present_count() == 2);
}

TEST_CASE("observation loader rejects negative variance") {
    auto grid = tiny_grid();
    TempFile f("test_obs_neg.csv");
    {
        std::ofstream out(f.path);
        out << "lat,lon,time,z,meas_var\n";
        const auto& sat = grid->pair(0).sat;
        out << sat.lat << "," << sat.lon << "," << sat.time << ",0.3,-0.1\n";
    }
    CHECK_THROWS_AS(load_observations(f.path, grid), SchemaError);
}

TEST_CASE("all-missing observation file loads with empty present set") {
    auto grid = tiny_grid();
    TempFile f("test_obs_allmiss.csv");
    {
        std::ofstream out(f.path);
        out << "lat,lon,time,z,meas_var\n";
        for (const auto& pr : grid->pairs())
            out << pr.sat.lat << "," << pr.sat.lon << "," << pr.sat.time << ",,\n";
    }
    auto loaded = load_observations(f.path, grid);
    CHECK(loaded.present_count() == 0);
    for (auto s : loaded.status) CHECK(s == ObsStatus::Missing);
}

TEST_CASE("sample_test_parameters determinism and box membership") {
    auto space = tiny_space();
    auto a = sample_test_parameters(space, 100, 7);
    auto b = sample_test_parameters(space, 100, 7);
    auto c = sample_test_parameters(space, 100, 8);
    bool same = true, diff = false;
    for (int k = 0; k < 100; ++k) {
        same = same && (a[static_cast<std::size_t>(k)].values == b[static_cast<std::size_t>(k)].values);
        diff = diff || (a[static_cast<std::size_t>(k)].values != c[static_cast<std::size_t>(k)].values);
        CHECK_NOTHROW(validate_in_space(space, a[static_cast<std::size_t>(k)]));
    }
    CHECK(same);
    CHECK(diff);
    CHECK_THROWS_AS(sample_test_parameters(space, 0, 1), DomainError);
}

TEST_CASE("sample_test_parameters near-degenerate box") {
    ParameterSpace space;
    space.dims = {{"x", 1.0, 1.0 + 1e-12}};
    auto samples = sample_test_parameters(space, 1000, 3);
    for (const auto& u : samples) {
        CHECK(u.values[0] >= 1.0);
        CHECK(u.values[0] <= 1.0 + 1e-12);
    }
}

TEST_CASE("sample_test_parameters law of large numbers") {
    auto space = tiny_space();
    const int n = 100000;
    auto samples = sample_test_parameters(space, n, 11);
    for (std::size_t i = 0; i < space.size(); ++i) {
        double sum = 0.0;
        for (const auto& u : samples) sum += u.values[i];
        double mean = sum / n;
        double lo = space.dims[i].min, hi = space.dims[i].max;
        double expect = (lo + hi) / 2.0;
        double se = (hi - lo) / std::sqrt(12.0 * n);
        CHECK(std::abs(mean - expect) < 3.0 * se);
    }
}

TEST_CASE("latin hypercube sampling stratifies each coordinate") {
    auto space = tiny_space();
    const int n = 64;
    auto samples = sample_test_parameters(space, n, 5, SamplingStrategy::LatinHypercube);
    for (std::size_t i = 0; i < space.size(); ++i) {
        std::vector<bool> seen(n, false);
        double lo = space.dims[i].min, width = (space.dims[i].max - lo) / n;
        for (const auto& u : samples) {
            int cell = static_cast<int>((u.values[i] - lo) / width);
            cell = std::min(cell, n - 1);
            CHECK(!seen[static_cast<std::size_t>(cell)]);
            seen[static_cast<std::size_t>(cell)] = true;
        }
    }
}

TEST_CASE("test parameter CSV round-trip") {
    auto space = tiny_space();
    auto tests = sample_test_parameters(space, 17, 21);
    TempFile f("test_params_tmp.csv");
    save_test_parameters(f.path, space, tests);
    auto loaded = load_test_parameters(f.path, space);
    REQUIRE(loaded.size() == tests.size());
    for (std::size_t k = 0; k < tests.size(); ++k) CHECK(loaded[k].values == tests[k].values);
}

TEST_CASE("noise model total variance is monotone in delta2") {
    NoiseModel nm;
    nm.meas_var = {0.01, 0.4, 0.0};
    double emu = 0.02;
    for (std::size_t cell = 0; cell < nm.meas_var.size(); ++cell) {
        double prev = -1.0;
        for (double d2 : {0.0, 0.001, 0.01, 0.5, 10.0}) {
            nm.other_var = d2;
            double total = nm.total(cell, emu);
            CHECK(total >= prev);
            prev = total;
        }
    }
}
