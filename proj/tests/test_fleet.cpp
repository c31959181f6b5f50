// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "emubound/error.hpp"
#include "emubound/fleet.hpp"
#include "emubound/synthetic.hpp"

using namespace emubound;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec(int cells, int members) {
    SyntheticSpec spec;
    spec.space.dims = {{"a", 0.0, 1.0}, {"b", -1.0, 2.0}};
    spec.sim_grid.lat_origin = 0.0;
    spec.sim_grid.lat_step = 1.0;
    spec.sim_grid.lat_count = cells;
    spec.sim_grid.lon_origin = 0.0;
    spec.sim_grid.lon_step = 1.0;
    spec.sim_grid.lon_count = 1;
    spec.sim_grid.time_count = 1;
    spec.sim_grid.time_step = 60;
    spec.sat_grid = spec.sim_grid;
    spec.u_star.values = {0.5, 0.5};
    spec.meas_var = 0.01;
    spec.n_members = members;
    spec.seed = 11;
    spec.model_seed = 3;
    return spec;
}

FleetConfig small_config(int workers = 1) {
    FleetConfig config;
    config.gp.restarts = 2;
    config.gp.max_iter = 60;
    config.gp.dim_ranges = {1.0, 3.0};
    config.seed = 1234;
    config.workers = workers;
    return config;
}

std::string hyper_fingerprint(const EmulatorFleet& fleet) {
    std::ostringstream ss;
    ss.precision(17);
    for (const auto& cell : fleet.cells) {
        if (!cell) {
            ss << "x;";
            continue;
        }
        const auto& h = cell->hyper();
        ss << h.beta0 << ',' << h.amplitude2 << ',' << h.nugget;
        for (double l : h.length_scales) ss << ',' << l;
        ss << ';';
    }
    return ss.str();
}

}  // namespace

TEST_CASE("singleton fleet equals a direct gp fit") {
    auto data = generate(small_spec(1, 12));
    auto config = small_config();
    auto fleet = train_fleet(data.train, config);
    REQUIRE(fleet.fitted_count() == 1);

    std::vector<double> outputs(12);
    for (int j = 0; j < 12; ++j) outputs[static_cast<std::size_t>(j)] = data.train.outputs(j, 0);
    GpFitConfig gp = config.gp;
    gp.seed = mix64(config.seed, cell_key(data.grid->pair(0).sim));
    auto direct = fit(data.train.inputs, outputs, gp);

    CHECK(fleet.cells[0]->hyper().beta0 == direct.hyper().beta0);
    CHECK(fleet.cells[0]->hyper().amplitude2 == direct.hyper().amplitude2);
    CHECK(fleet.cells[0]->hyper().length_scales == direct.hyper().length_scales);
    CHECK(fleet.cells[0]->hyper().nugget == direct.hyper().nugget);
}

TEST_CASE("serial and parallel training produce identical fleets") {
    auto data = generate(small_spec(8, 10));
    auto serial = train_fleet_serial(data.train, small_config(1));
    auto parallel = train_fleet_parallel(data.train, small_config(8));
    CHECK(hyper_fingerprint(serial) == hyper_fingerprint(parallel));
    CHECK(serial.failures.size() == parallel.failures.size());
}

TEST_CASE("per-cell seeds are scheduling-independent: subsets train identically") {
    // The same cell trained inside a bigger grid gets the same seed and result.
    auto big = generate(small_spec(6, 10));
    auto small = generate(small_spec(3, 10));
    // Both specs share model_seed and design seed, so cells 0..2 coincide.
    auto fleet_big = train_fleet(big.train, small_config());
    auto fleet_small = train_fleet(small.train, small_config());
    for (int i = 0; i < 3; ++i) {
        CHECK(fleet_big.cells[static_cast<std::size_t>(i)]->hyper().amplitude2 ==
              fleet_small.cells[static_cast<std::size_t>(i)]->hyper().amplitude2);
    }
}

TEST_CASE("predict_fleet matches per-cell predict calls and is schedule-independent") {
    auto spec = small_spec(5, 10);
    auto data = generate(spec);
    auto fleet = train_fleet(data.train, small_config());
    auto tests = sample_test_parameters(spec.space, 20, 77);

    auto serial = predict_fleet_serial(fleet, tests);
    auto parallel = predict_fleet_parallel(fleet, tests, 8);
    CHECK((serial.mean.array() == parallel.mean.array()).all());
    CHECK((serial.var.array() == parallel.var.array()).all());

    for (std::size_t r = 0; r < serial.n_cells(); ++r) {
        const auto& emu = *fleet.cells[static_cast<std::size_t>(serial.cell_indices[r])];
        for (std::size_t k = 0; k < tests.size(); ++k) {
            auto [m, v] = emu.predict(tests[k]);
            CHECK(serial.mean(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) == m);
            CHECK(serial.var(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) == v);
        }
    }
}

TEST_CASE("interpolation rowwise: predicting at training inputs reproduces outputs") {
    auto spec = small_spec(3, 8);
    auto data = generate(spec);
    auto config = small_config();
    config.gp.nugget_floor = 1e-12;
    auto fleet = train_fleet(data.train, config);
    auto table = predict_fleet(fleet, data.train.inputs, 1);
    for (std::size_t r = 0; r < table.n_cells(); ++r) {
        for (std::size_t k = 0; k < data.train.inputs.size(); ++k) {
            double truth = data.train.outputs(static_cast<Eigen::Index>(k),
                                              static_cast<Eigen::Index>(table.cell_indices[r]));
            double m = table.mean(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
            // The fitted nugget is small but positive, so interpolation is approximate.
            CHECK(m == doctest::Approx(truth).epsilon(0.02));
        }
    }
}

TEST_CASE("fleet round-trips through serialization and predicts identically") {
    auto spec = small_spec(4, 9);
    auto data = generate(spec);
    auto fleet = train_fleet(data.train, small_config());
    const std::string dir = "test_fleet_dir";
    fs::remove_all(dir);
    save_fleet(dir, fleet, "deadbeef");
    CHECK(fleet_config_hash(dir) == "deadbeef");

    auto loaded = load_fleet(dir, data.train, "deadbeef");
    CHECK(loaded.fitted_count() == fleet.fitted_count());
    auto tests = sample_test_parameters(spec.space, 10, 5);
    auto before = predict_fleet(fleet, tests, 1);
    auto after = predict_fleet(loaded, tests, 1);
    CHECK((before.mean.array() == after.mean.array()).all());
    CHECK((before.var.array() == after.var.array()).all());

    CHECK_THROWS_AS(load_fleet(dir, data.train, "0000000000000000"), ConfigMismatch);
    fs::remove_all(dir);
}

TEST_CASE("failed cells are recorded and excluded") {
    auto spec = small_spec(4, 6);
    auto data = generate(spec);
    // Poison one cell's outputs so its fit cannot evaluate.
    data.train.outputs(0, 2) = std::numeric_limits<double>::quiet_NaN();
    auto fleet = train_fleet(data.train, small_config());
    CHECK(fleet.fitted_count() == 3);
    REQUIRE(fleet.failures.size() == 1);
    CHECK(fleet.failures[0].cell_index == 2);
    CHECK(!fleet.cells[2].has_value());

    // Prediction table rows skip the failed cell.
    auto tests = sample_test_parameters(spec.space, 3, 1);
    auto table = predict_fleet(fleet, tests, 1);
    CHECK(table.n_cells() == 3);
    CHECK(table.row_of_cell(2) == -1);
    CHECK(table.row_of_cell(3) >= 0);
}

TEST_CASE("prediction table save/load round-trip") {
    auto spec = small_spec(3, 8);
    auto data = generate(spec);
    auto fleet = train_fleet(data.train, small_config());
    auto tests = sample_test_parameters(spec.space, 7, 21);
    auto table = predict_fleet(fleet, tests, 1);

    PredictionTableMeta meta{"beefcafe", 21};
    save_predictions("test_preds.json", "test_preds.bin", table, spec.space, meta);
    std::string hash;
    auto loaded = load_predictions("test_preds.json", spec.space, &hash);
    CHECK(hash == "beefcafe");
    CHECK(loaded.cell_indices == table.cell_indices);
    CHECK((loaded.mean.array() == table.mean.array()).all());
    CHECK((loaded.var.array() == table.var.array()).all());
    REQUIRE(loaded.tests.size() == tests.size());
    for (std::size_t k = 0; k < tests.size(); ++k) CHECK(loaded.tests[k].values == tests[k].values);
    std::remove("test_preds.json");
    std::remove("test_preds.bin");
}

TEST_CASE("empty inputs are rejected") {
    auto data = generate(small_spec(2, 6));
    auto fleet = train_fleet(data.train, small_config());
    CHECK_THROWS_AS(predict_fleet(fleet, {}, 1), DomainError);
}
