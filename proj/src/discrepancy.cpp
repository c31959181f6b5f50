// SPDX-License-Identifier: Apache-2.0
#include "emubound/discrepancy.hpp"

#include <cmath>
#include <limits>

#include <omp.h>

#include "emubound/error.hpp"
#include "emubound/optim.hpp"
#include "emubound/stats.hpp"

namespace emubound {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct AlignedCell {
    int row;
    double z;
    double meas_var;
};

// Resolve M* cells to prediction rows once; throws if a kept cell has no
// emulator row or no observation.
std::vector<AlignedCell> align(const PredictionTable& preds, const ObservationSet& obs, const MStar& mstar) {
    if (mstar.empty()) throw DomainError("M* is empty");
    std::vector<AlignedCell> cells;
    cells.reserve(mstar.size());
    for (int cell : mstar.cells) {
        if (cell < 0 || static_cast<std::size_t>(cell) >= obs.size())
            throw DomainError("M* cell index out of range");
        int row = preds.row_of_cell(cell);
        if (row < 0) throw DomainError("M* cell " + std::to_string(cell) + " has no fitted emulator");
        if (obs.status[static_cast<std::size_t>(cell)] != ObsStatus::Present)
            throw DomainError("M* cell " + std::to_string(cell) + " has no observation");
        cells.push_back({row, obs.z[static_cast<std::size_t>(cell)],
                         obs.meas_var[static_cast<std::size_t>(cell)]});
    }
    return cells;
}

double log_likelihood_aligned(const std::vector<AlignedCell>& cells, const PredictionTable& preds, int k,
                              double delta2) {
    KahanSum acc;
    for (const auto& c : cells) {
        double s2 = preds.var(c.row, k) + c.meas_var + delta2;
        if (!(s2 > 0.0)) throw DomainError("log_likelihood: zero total variance at a cell");
        double r = preds.mean(c.row, k) - c.z;
        acc.add(-0.5 * (kLog2Pi + std::log(s2) + r * r / s2));
    }
    return acc.value();
}

std::pair<double, double> maximize_aligned(const std::vector<AlignedCell>& cells, const PredictionTable& preds,
                                           int k, const BracketConfig& bracket) {
    // Residual variance at k sets the bracket scale.
    std::vector<double> resid;
    resid.reserve(cells.size());
    for (const auto& c : cells) resid.push_back(preds.mean(c.row, k) - c.z);
    double r2_mean = 0.0;
    for (double r : resid) r2_mean += r * r;
    r2_mean /= static_cast<double>(resid.size());

    double upper = bracket.upper_factor * r2_mean;
    if (!(upper > 0.0)) {
        // All residuals are exactly zero: the boundary optimum.
        return {0.0, log_likelihood_aligned(cells, preds, k, 0.0)};
    }

    auto objective = [&](double d2) {
        double v;
        try {
            v = log_likelihood_aligned(cells, preds, k, d2);
        } catch (const DomainError&) {
            // A zero total variance at the delta2 = 0 endpoint; never optimal
            // unless the whole bracket is degenerate.
            return -std::numeric_limits<double>::infinity();
        }
        if (std::isnan(v)) throw OptError("maximize_delta2: non-finite likelihood in bracket");
        return v;
    };

    for (int attempt = 0; attempt <= bracket.expand_retries; ++attempt) {
        auto res = brent_maximize(objective, 0.0, upper, bracket.abs_tol);
        bool at_top = res.x >= upper - 2.0 * bracket.abs_tol;
        if (!at_top || attempt == bracket.expand_retries) return {res.x, res.value};
        upper *= 10.0;
    }
    throw OptError("maximize_delta2: unreachable");
}

}  // namespace

double log_likelihood(int k, double delta2, const PredictionTable& preds, const ObservationSet& obs,
                      const MStar& mstar) {
    if (delta2 < 0.0) throw DomainError("log_likelihood: delta2 must be nonnegative");
    if (k < 0 || static_cast<std::size_t>(k) >= preds.n_tests())
        throw DomainError("log_likelihood: test index out of range");
    auto cells = align(preds, obs, mstar);
    return log_likelihood_aligned(cells, preds, k, delta2);
}

std::pair<double, double> maximize_delta2(int k, const PredictionTable& preds, const ObservationSet& obs,
                                          const MStar& mstar, const BracketConfig& bracket) {
    if (!(bracket.upper_factor > 0.0)) throw DomainError("maximize_delta2: bracket upper bound must be positive");
    auto cells = align(preds, obs, mstar);
    return maximize_aligned(cells, preds, k, bracket);
}

DiscrepancyEstimate estimate(const PredictionTable& preds, const ObservationSet& obs, const MStar& mstar,
                             const DiscrepancyConfig& config) {
    const auto n_tests = preds.n_tests();
    if (n_tests == 0) throw DomainError("estimate: no test parameters");
    auto cells = align(preds, obs, mstar);

    DiscrepancyEstimate est;
    est.per_k_delta2.assign(n_tests, std::numeric_limits<double>::quiet_NaN());
    est.per_k_loglik.assign(n_tests, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> errors(n_tests);

    const int workers = std::max(1, config.workers);
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(n_tests); ++k) {
        try {
            auto [d2, ll] = maximize_aligned(cells, preds, static_cast<int>(k), config.bracket);
            est.per_k_delta2[static_cast<std::size_t>(k)] = d2;
            est.per_k_loglik[static_cast<std::size_t>(k)] = ll;
        } catch (const Error& e) {
            errors[static_cast<std::size_t>(k)] = e.what();
        }
    }

    // Argmax in fixed k order; ties toward the smaller k.
    for (std::size_t k = 0; k < n_tests; ++k) {
        double ll = est.per_k_loglik[k];
        if (std::isnan(ll)) continue;
        if (est.best_k < 0 || ll > est.loglik) {
            est.best_k = static_cast<int>(k);
            est.loglik = ll;
            est.delta2 = est.per_k_delta2[k];
        }
    }
    if (est.best_k < 0) {
        std::string first;
        for (const auto& e : errors)
            if (!e.empty()) {
                first = e;
                break;
            }
        throw EstimationError("estimate: every test parameter failed (" + first + ")");
    }
    return est;
}

}  // namespace emubound
