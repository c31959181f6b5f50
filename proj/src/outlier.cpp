// SPDX-License-Identifier: Apache-2.0
#include "emubound/outlier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "emubound/error.hpp"
#include "emubound/stats.hpp"

namespace emubound {

double j_metric(double mean, double var_emu, double meas_var, double z, double gamma) {
    if (var_emu < 0.0 || meas_var < 0.0) throw DomainError("j_metric: variances must be nonnegative");
    if (gamma < 0.0) throw DomainError("j_metric: gamma must be nonnegative");
    double denom2 = var_emu + meas_var + gamma * gamma;
    if (!(denom2 > 0.0)) throw DomainError("j_metric: zero denominator");
    return std::abs(mean - z) / std::sqrt(denom2);
}

namespace {

// Test index minimizing the mean squared residual over evaluable cells.
int best_fitting_test(const PredictionTable& preds, const ObservationSet& obs,
                      const std::vector<int>& evaluable_rows) {
    const auto n_tests = preds.n_tests();
    int best = -1;
    double best_msr = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_tests; ++k) {
        KahanSum acc;
        for (int r : evaluable_rows) {
            int cell = preds.cell_indices[static_cast<std::size_t>(r)];
            double d = preds.mean(r, static_cast<Eigen::Index>(k)) - obs.z[static_cast<std::size_t>(cell)];
            acc.add(d * d);
        }
        double msr = acc.value();
        if (msr < best_msr) {
            best_msr = msr;
            best = static_cast<int>(k);
        }
    }
    return best;
}

}  // namespace

FilterReport find_outliers(const PredictionTable& preds, const ObservationSet& obs,
                           const FilterConfig& config) {
    if (obs.size() != obs.grid->size()) throw DomainError("find_outliers: observations misaligned");
    const auto n_pairs = obs.grid->size();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    FilterReport report;
    report.cells.resize(n_pairs);

    // Evaluable = has an emulator and a present observation.
    std::vector<int> evaluable_rows;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        auto& rec = report.cells[i];
        rec.cell_index = static_cast<int>(i);
        rec.min_j = nan;
        int row = preds.row_of_cell(static_cast<int>(i));
        if (row < 0) {
            rec.reason = ExclusionReason::Unfitted;
            ++report.unfitted_count;
        } else if (obs.status[i] != ObsStatus::Present) {
            rec.reason = ExclusionReason::Missing;
            ++report.missing_count;
        } else {
            evaluable_rows.push_back(row);
        }
    }
    if (evaluable_rows.empty()) throw DomainError("find_outliers: no cell has both an emulator and an observation");

    report.best_k = best_fitting_test(preds, obs, evaluable_rows);

    if (config.gamma) {
        report.gamma = *config.gamma;
        if (report.gamma < 0.0) throw DomainError("find_outliers: gamma must be nonnegative");
    } else {
        // Crude pre-estimate of the discrepancy scale: the variance of the
        // residuals at the best-fitting test parameter.
        std::vector<double> resid;
        resid.reserve(evaluable_rows.size());
        for (int r : evaluable_rows) {
            int cell = preds.cell_indices[static_cast<std::size_t>(r)];
            resid.push_back(preds.mean(r, report.best_k) - obs.z[static_cast<std::size_t>(cell)]);
        }
        report.gamma = std::sqrt(sample_variance(resid));
    }

    if (config.threshold) {
        report.threshold = *config.threshold;
    } else {
        // Bonferroni-like: the 1 - 1/(2|M|) quantile of the standard half-normal.
        report.threshold = half_normal_quantile(1.0 - 1.0 / (2.0 * static_cast<double>(n_pairs)));
    }

    const auto n_tests = static_cast<Eigen::Index>(preds.n_tests());
    std::size_t n_outliers = 0;
    for (int r : evaluable_rows) {
        int cell = preds.cell_indices[static_cast<std::size_t>(r)];
        double z = obs.z[static_cast<std::size_t>(cell)];
        double mv = obs.meas_var[static_cast<std::size_t>(cell)];
        double min_j = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < n_tests; ++k)
            min_j = std::min(min_j, j_metric(preds.mean(r, k), preds.var(r, k), mv, z, report.gamma));
        auto& rec = report.cells[static_cast<std::size_t>(cell)];
        rec.min_j = min_j;
        if (min_j > report.threshold) {
            rec.reason = ExclusionReason::Outlier;
            ++n_outliers;
        } else {
            rec.reason = ExclusionReason::Kept;
            report.mstar.push_back(cell);
        }
    }
    report.outlier_fraction = static_cast<double>(n_outliers) / static_cast<double>(evaluable_rows.size());
    return report;
}

std::vector<std::pair<double, double>> qq_data(const PredictionTable& preds, const ObservationSet& obs,
                                               const FilterReport& report) {
    std::vector<double> js;
    for (const auto& rec : report.cells) {
        if (std::isnan(rec.min_j)) continue;
        int row = preds.row_of_cell(rec.cell_index);
        double z = obs.z[static_cast<std::size_t>(rec.cell_index)];
        double mv = obs.meas_var[static_cast<std::size_t>(rec.cell_index)];
        js.push_back(j_metric(preds.mean(row, report.best_k), preds.var(row, report.best_k), mv, z,
                              report.gamma));
    }
    std::sort(js.begin(), js.end());
    std::vector<std::pair<double, double>> out;
    out.reserve(js.size());
    const double m = static_cast<double>(js.size());
    for (std::size_t i = 0; i < js.size(); ++i) {
        double q = half_normal_quantile((static_cast<double>(i) + 0.5) / m);
        out.emplace_back(q, js[i]);
    }
    return out;
}

}  // namespace emubound
