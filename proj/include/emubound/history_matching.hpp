// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "emubound/plausibility.hpp"

namespace emubound {

// History-matching comparison statistics over the per-cell absolute
// standardized residuals on M*:
//   Quantile mode: the lower empirical quantile at level q (q = 1 -> maximum,
//   q = 0.5 -> median). The paper's tolerance parameter maps to 1 - q: its
//   "q = 0.25" comparison statistic is the 0.75 quantile here.
//   OrderStat mode: the Nth largest element (N = 1 -> maximum).
enum class HMMode : std::uint8_t { Quantile, OrderStat };

struct HMConfig {
    HMMode mode = HMMode::Quantile;
    double q = 0.75;
    int order_n = 1;
    double level = 0.05;
    int mc_samples = 100000;
    std::uint64_t seed = 0;
    int workers = 1;
};

double hm_statistic(int k, const PredictionTable& preds, const ObservationSet& obs, const MStar& mstar,
                    double delta2, const HMConfig& config);

// 1 - level quantile of the Monte Carlo sampling distribution of the statistic
// over m independent standard half-normal variables. Seeded and reproducible
// for any worker count (fixed batch partition, fixed-order reduction).
double hm_critical(int m, const HMConfig& config);

std::vector<TestOutcome> hm_test_all(const PredictionTable& preds, const ObservationSet& obs,
                                     const MStar& mstar, double delta2, const HMConfig& config);

}  // namespace emubound
