// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emubound/data.hpp"

namespace emubound {

// Ground-truth generator: a cheap analytic forward model stands in for the
// simulator; observations are drawn exactly from the additive-noise data model,
// so calibration and coverage experiments have a decidable truth.
struct SyntheticSpec {
    ParameterSpace space;
    RegularGrid sim_grid;
    RegularGrid sat_grid;          // defaults to sim_grid when counts are zero
    ParameterVector u_star;
    double delta2 = 0.0;           // homoscedastic extra-noise variance
    double meas_var = 0.02;        // per-cell measurement variance (constant)
    int n_members = 20;
    std::uint64_t seed = 0;        // noise / design draws
    std::uint64_t model_seed = 0;  // forward-model coefficients; fix it to share one model across replications
    std::string family = "ridge";  // per-cell sums of exponentiated-quadratic ridge functions
    int planted_outliers = 0;      // cells whose observation is shifted by outlier_shift_sigmas
    double outlier_shift_sigmas = 10.0;
    double missing_fraction = 0.0;

    bool has_sat_grid() const { return sat_grid.lat_count > 0; }
};

struct TruthRecord {
    ParameterVector u_star;
    double delta2 = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t model_seed = 0;
    std::vector<SpaceTimePoint> outlier_cells;
    std::vector<SpaceTimePoint> missing_cells;
    int monotone_axis = 0;
};

struct SyntheticData {
    std::shared_ptr<const MatchedGrid> grid;
    TrainingSet train;
    ObservationSet obs;
    TruthRecord truth;
};

// Deterministic, smooth in u; coordinate 0 has a strictly positive additive
// slope on designated cells (every cell with an even coefficient hash).
double forward(const SyntheticSpec& spec, const SpaceTimePoint& x, const ParameterVector& u);
std::vector<double> forward_grad(const SyntheticSpec& spec, const SpaceTimePoint& x, const ParameterVector& u);
bool forward_is_monotone_cell(const SyntheticSpec& spec, const SpaceTimePoint& x);

SyntheticData generate(const SyntheticSpec& spec);

void save_truth(const std::string& path, const TruthRecord& truth, const std::string& config_hash);
TruthRecord load_truth(const std::string& path);

}  // namespace emubound
