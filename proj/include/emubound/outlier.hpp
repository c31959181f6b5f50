// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "emubound/fleet.hpp"

namespace emubound {

// Standardized distance between an emulated mean and an observation, with a
// tolerance gamma standing in for the not-yet-estimated discrepancy scale.
double j_metric(double mean, double var_emu, double meas_var, double z, double gamma);

enum class ExclusionReason : std::uint8_t { Kept, Outlier, Missing, Unfitted };

struct CellFilterRecord {
    int cell_index = -1;
    ExclusionReason reason = ExclusionReason::Kept;
    double min_j = 0.0;  // NaN when the cell was never evaluable
};

struct FilterReport {
    std::vector<CellFilterRecord> cells;     // one per grid pair, grid order
    std::vector<int> mstar;                  // kept pair indices, grid order
    double gamma = 0.0;
    double threshold = 0.0;
    int best_k = -1;                         // test index used for the gamma default / QQ data
    double outlier_fraction = 0.0;           // outliers among evaluable cells
    std::size_t missing_count = 0;
    std::size_t unfitted_count = 0;
};

struct FilterConfig {
    std::optional<double> gamma;      // default: sqrt(residual variance at the best-fitting test)
    std::optional<double> threshold;  // default: half-normal quantile at 1 - 1/(2|M|)
};

// A cell is excluded as an outlier iff min over k of J exceeds the threshold:
// no tested parameter brings the emulator near the observation. Cells missing
// observations or emulators are excluded separately.
FilterReport find_outliers(const PredictionTable& preds, const ObservationSet& obs,
                           const FilterConfig& config = {});

// Sorted observed J values (at the report's best-fitting test) against
// half-normal quantiles, for manual gamma tuning.
std::vector<std::pair<double, double>> qq_data(const PredictionTable& preds, const ObservationSet& obs,
                                               const FilterReport& report);

}  // namespace emubound
