// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "emubound/discrepancy.hpp"

namespace emubound {

struct TestOutcome {
    int k = -1;
    double statistic = 0.0;
    double critical = 0.0;
    bool reject = false;
    int df = 0;
    double level = 0.0;
};

// Implausibility I(u^k): root-sum-square of the standardized residuals over M*
// with total variance var_emu + meas_var + delta2, summed in grid order with
// compensated summation (bit-stable across worker counts).
double implausibility(int k, const PredictionTable& preds, const ObservationSet& obs, const MStar& mstar,
                      double delta2);

// sqrt of the chi-square (1 - level) quantile at df degrees of freedom: the
// critical value of the sqrt-chi-square null.
double critical_value(int df, double level);

std::vector<TestOutcome> test_all(const PredictionTable& preds, const ObservationSet& obs, const MStar& mstar,
                                  double delta2, double level, int workers = 1);

}  // namespace emubound
