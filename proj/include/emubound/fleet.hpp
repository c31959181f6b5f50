// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "emubound/gp.hpp"

namespace emubound {

struct FleetConfig {
    GpFitConfig gp;
    std::uint64_t seed = 0;  // per-cell fit seed = mix(seed, cell_key(sim point))
    int workers = 1;
};

struct FitFailure {
    int cell_index = -1;
    std::string message;
};

// Per-cell emulator collection over a MatchedGrid. Cells whose fit failed are
// left empty and recorded; the filter feeds them into the exclusion set.
struct EmulatorFleet {
    std::shared_ptr<const MatchedGrid> grid;
    std::vector<std::optional<CellEmulator>> cells;  // aligned with grid pair order
    std::vector<FitFailure> failures;

    std::size_t fitted_count() const;
};

// Serial reference implementation; the parallel driver must match it bitwise.
EmulatorFleet train_fleet_serial(const TrainingSet& train, const FleetConfig& config);
EmulatorFleet train_fleet_parallel(const TrainingSet& train, const FleetConfig& config);
// Dispatches on config.workers.
EmulatorFleet train_fleet(const TrainingSet& train, const FleetConfig& config);

// Dense per-cell, per-test predictive means and variances for the fitted cells,
// in grid order. Row r of mean/var corresponds to cell_indices[r].
struct PredictionTable {
    std::vector<int> cell_indices;
    Eigen::MatrixXd mean;  // fitted cells x tests
    Eigen::MatrixXd var;
    std::vector<ParameterVector> tests;

    std::size_t n_cells() const { return cell_indices.size(); }
    std::size_t n_tests() const { return tests.size(); }
    // Row for a grid pair index, or -1 when the cell has no emulator.
    int row_of_cell(int cell_index) const;
};

PredictionTable predict_fleet_serial(const EmulatorFleet& fleet, const std::vector<ParameterVector>& tests);
PredictionTable predict_fleet_parallel(const EmulatorFleet& fleet, const std::vector<ParameterVector>& tests,
                                       int workers);
PredictionTable predict_fleet(const EmulatorFleet& fleet, const std::vector<ParameterVector>& tests,
                              int workers = 1);

// Fleet directory layout: index.json plus one emulator record per cell.
// Training data is referenced, not duplicated; load re-derives factorizations.
void save_fleet(const std::string& dir, const EmulatorFleet& fleet, const std::string& config_hash);
EmulatorFleet load_fleet(const std::string& dir, const TrainingSet& train,
                         const std::string& expect_config_hash = "");
std::string fleet_config_hash(const std::string& dir);

struct PredictionTableMeta {
    std::string config_hash;
    std::uint64_t seed = 0;
};

// recorded_bin_name is the file name written into the header; it defaults to
// bin_path's basename (pass the final name when writing through a temp file).
void save_predictions(const std::string& json_path, const std::string& bin_path,
                      const PredictionTable& table, const ParameterSpace& space,
                      const PredictionTableMeta& meta, const std::string& recorded_bin_name = "");
PredictionTable load_predictions(const std::string& json_path, const ParameterSpace& space,
                                 std::string* config_hash_out = nullptr);

}  // namespace emubound
