// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "emubound/plausibility.hpp"

namespace emubound {

// Neyman inversion of the plausibility test: the tested parameter vectors that
// were not rejected, standing in for the continuous confidence region.
struct ConfidenceSet {
    std::vector<int> retained_k;
    std::vector<ParameterVector> retained;
    double level = 0.0;
    std::string provenance;  // config hash of the producing run
};

ConfidenceSet invert(const std::vector<TestOutcome>& outcomes, const std::vector<ParameterVector>& tests,
                     const std::string& provenance = "");

// Scatter of the statistic against one coordinate, with the critical value.
struct Projection1D {
    int axis = -1;
    double critical = 0.0;
    std::vector<double> coordinate;  // u_i per test
    std::vector<double> statistic;
    std::vector<bool> reject;
};

Projection1D project_1d(const std::vector<ParameterVector>& tests, const std::vector<TestOutcome>& outcomes,
                        int axis);

// Per-bin proportion of retained test points over the 2-D range box of a pair
// of axes. Bins that received no test points are flagged, not reported as zero.
struct Projection2D {
    int axis_i = -1, axis_j = -1;
    std::vector<double> edges_i, edges_j;  // bins+1 each
    std::vector<int> count;                // row-major [bin_i][bin_j]
    std::vector<int> retained_count;
    std::vector<double> proportion;        // -1 sentinel for empty bins
    int bins_i = 0, bins_j = 0;

    int flat(int bi, int bj) const { return bi * bins_j + bj; }
};

Projection2D project_2d(const std::vector<ParameterVector>& tests, const std::vector<TestOutcome>& outcomes,
                        const ParameterSpace& space, int axis_i, int axis_j, int bins);

}  // namespace emubound
