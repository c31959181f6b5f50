// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "emubound/fleet.hpp"

namespace emubound {

// Indices into the MatchedGrid pair order: the cells entering all likelihoods
// and test statistics (outliers and missing cells removed).
struct MStar {
    std::vector<int> cells;

    std::size_t size() const { return cells.size(); }
    bool empty() const { return cells.empty(); }
};

// Gaussian log likelihood of the observations at test parameter k with
// per-cell variance var_emu + meas_var + delta2, summed over M* in grid order.
double log_likelihood(int k, double delta2, const PredictionTable& preds, const ObservationSet& obs,
                      const MStar& mstar);

struct BracketConfig {
    double upper_factor = 10.0;  // upper bound = factor * residual variance at k
    double abs_tol = 1e-10;
    int expand_retries = 1;      // re-bracket with x10 when the optimum hits the top
};

// Brent maximization of the log likelihood over delta2 in [0, upper];
// a boundary optimum at zero is permitted.
std::pair<double, double> maximize_delta2(int k, const PredictionTable& preds, const ObservationSet& obs,
                                          const MStar& mstar, const BracketConfig& bracket = {});

struct DiscrepancyEstimate {
    double delta2 = 0.0;
    int best_k = -1;
    double loglik = 0.0;
    std::vector<double> per_k_delta2;
    std::vector<double> per_k_loglik;
};

struct DiscrepancyConfig {
    BracketConfig bracket;
    int workers = 1;
};

// Per-k Brent maximization followed by an argmax over k (ties toward smaller k).
DiscrepancyEstimate estimate(const PredictionTable& preds, const ObservationSet& obs, const MStar& mstar,
                             const DiscrepancyConfig& config = {});

}  // namespace emubound
