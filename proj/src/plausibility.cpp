// SPDX-License-Identifier: Apache-2.0
#include "emubound/plausibility.hpp"

#include <cmath>

#include <omp.h>

#include "emubound/error.hpp"
#include "emubound/stats.hpp"

namespace emubound {

namespace {

struct AlignedCell {
    int row;
    double z;
    double meas_var;
};

std::vector<AlignedCell> align(const PredictionTable& preds, const ObservationSet& obs, const MStar& mstar) {
    if (mstar.empty()) throw DomainError("M* is empty");
    std::vector<AlignedCell> cells;
    cells.reserve(mstar.size());
    for (int cell : mstar.cells) {
        if (cell < 0 || static_cast<std::size_t>(cell) >= obs.size())
            throw DomainError("M* cell index out of range");
        int row = preds.row_of_cell(cell);
        if (row < 0) throw DomainError("M* cell has no fitted emulator");
        if (obs.status[static_cast<std::size_t>(cell)] != ObsStatus::Present)
            throw DomainError("M* cell has no observation");
        cells.push_back({row, obs.z[static_cast<std::size_t>(cell)],
                         obs.meas_var[static_cast<std::size_t>(cell)]});
    }
    return cells;
}

double implausibility_aligned(const std::vector<AlignedCell>& cells, const PredictionTable& preds, int k,
                              double delta2) {
    KahanSum acc;
    for (const auto& c : cells) {
        double s2 = preds.var(c.row, k) + c.meas_var + delta2;
        if (!(s2 > 0.0)) throw DomainError("implausibility: zero total variance at a cell");
        double r = preds.mean(c.row, k) - c.z;
        acc.add(r * r / s2);
    }
    return std::sqrt(acc.value());
}

}  // namespace

double implausibility(int k, const PredictionTable& preds, const ObservationSet& obs, const MStar& mstar,
                      double delta2) {
    if (delta2 < 0.0) throw DomainError("implausibility: delta2 must be nonnegative");
    if (k < 0 || static_cast<std::size_t>(k) >= preds.n_tests())
        throw DomainError("implausibility: test index out of range");
    auto cells = align(preds, obs, mstar);
    return implausibility_aligned(cells, preds, k, delta2);
}

double critical_value(int df, double level) {
    if (df < 1) throw DomainError("critical_value: df must be >= 1");
    if (!(level > 0.0 && level < 1.0)) throw DomainError("critical_value: level must be in (0, 1)");
    return std::sqrt(chi_squared_quantile(df, 1.0 - level));
}

std::vector<TestOutcome> test_all(const PredictionTable& preds, const ObservationSet& obs, const MStar& mstar,
                                  double delta2, double level, int workers) {
    if (delta2 < 0.0) throw DomainError("test_all: delta2 must be nonnegative");
    auto cells = align(preds, obs, mstar);
    const int df = static_cast<int>(mstar.size());
    const double crit = critical_value(df, level);
    const auto n_tests = preds.n_tests();
    std::vector<TestOutcome> outcomes(n_tests);

    const int w = std::max(1, workers);
#pragma omp parallel for schedule(static) num_threads(w)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(n_tests); ++k) {
        auto& o = outcomes[static_cast<std::size_t>(k)];
        o.k = static_cast<int>(k);
        o.statistic = implausibility_aligned(cells, preds, static_cast<int>(k), delta2);
        o.critical = crit;
        o.reject = o.statistic > crit;
        o.df = df;
        o.level = level;
    }
    return outcomes;
}

}  // namespace emubound
