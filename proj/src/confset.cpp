// SPDX-License-Identifier: Apache-2.0
#include "emubound/confset.hpp"

#include <algorithm>
#include <cmath>

#include "emubound/error.hpp"

namespace emubound {

ConfidenceSet invert(const std::vector<TestOutcome>& outcomes, const std::vector<ParameterVector>& tests,
                     const std::string& provenance) {
    if (outcomes.size() != tests.size()) throw DomainError("invert: outcomes and tests are misaligned");
    ConfidenceSet set;
    set.provenance = provenance;
    if (!outcomes.empty()) set.level = outcomes.front().level;
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
        if (outcomes[k].reject) continue;
        set.retained_k.push_back(static_cast<int>(k));
        set.retained.push_back(tests[k]);
    }
    return set;
}

Projection1D project_1d(const std::vector<ParameterVector>& tests, const std::vector<TestOutcome>& outcomes,
                        int axis) {
    if (outcomes.size() != tests.size()) throw DomainError("project_1d: outcomes and tests are misaligned");
    if (tests.empty()) throw DomainError("project_1d: no tests");
    if (axis < 0 || static_cast<std::size_t>(axis) >= tests[0].size())
        throw DomainError("project_1d: axis out of range");
    Projection1D proj;
    proj.axis = axis;
    proj.critical = outcomes.front().critical;
    proj.coordinate.reserve(tests.size());
    for (std::size_t k = 0; k < tests.size(); ++k) {
        proj.coordinate.push_back(tests[k].values[static_cast<std::size_t>(axis)]);
        proj.statistic.push_back(outcomes[k].statistic);
        proj.reject.push_back(outcomes[k].reject);
    }
    return proj;
}

Projection2D project_2d(const std::vector<ParameterVector>& tests, const std::vector<TestOutcome>& outcomes,
                        const ParameterSpace& space, int axis_i, int axis_j, int bins) {
    if (outcomes.size() != tests.size()) throw DomainError("project_2d: outcomes and tests are misaligned");
    if (bins < 1) throw DomainError("project_2d: bins must be >= 1");
    const int p = static_cast<int>(space.size());
    if (axis_i < 0 || axis_i >= p || axis_j < 0 || axis_j >= p || axis_i == axis_j)
        throw DomainError("project_2d: invalid axis pair");

    Projection2D proj;
    proj.axis_i = axis_i;
    proj.axis_j = axis_j;
    proj.bins_i = proj.bins_j = bins;
    auto make_edges = [&](int axis) {
        const auto& d = space.dims[static_cast<std::size_t>(axis)];
        std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
        for (int b = 0; b <= bins; ++b)
            edges[static_cast<std::size_t>(b)] = d.min + (d.max - d.min) * b / static_cast<double>(bins);
        return edges;
    };
    proj.edges_i = make_edges(axis_i);
    proj.edges_j = make_edges(axis_j);
    proj.count.assign(static_cast<std::size_t>(bins) * bins, 0);
    proj.retained_count.assign(static_cast<std::size_t>(bins) * bins, 0);

    auto bin_of = [&](double v, int axis) {
        const auto& d = space.dims[static_cast<std::size_t>(axis)];
        double t = (v - d.min) / (d.max - d.min);
        int b = static_cast<int>(std::floor(t * bins));
        return std::clamp(b, 0, bins - 1);  // v == max lands in the last bin
    };

    for (std::size_t k = 0; k < tests.size(); ++k) {
        int bi = bin_of(tests[k].values[static_cast<std::size_t>(axis_i)], axis_i);
        int bj = bin_of(tests[k].values[static_cast<std::size_t>(axis_j)], axis_j);
        auto f = static_cast<std::size_t>(proj.flat(bi, bj));
        proj.count[f] += 1;
        if (!outcomes[k].reject) proj.retained_count[f] += 1;
    }
    proj.proportion.resize(proj.count.size());
    for (std::size_t f = 0; f < proj.count.size(); ++f)
        proj.proportion[f] = proj.count[f] == 0
                                 ? -1.0
                                 : static_cast<double>(proj.retained_count[f]) / proj.count[f];
    return proj;
}

}  // namespace emubound
