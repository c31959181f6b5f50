// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emubound/grid.hpp"

namespace emubound {

struct ParameterSpace {
    struct Dim {
        std::string name;
        double min = 0.0;
        double max = 1.0;
    };
    std::vector<Dim> dims;

    std::size_t size() const { return dims.size(); }
    void validate() const;
};

struct ParameterVector {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
};

// Throws RangeViolation naming the first out-of-range coordinate.
void validate_in_space(const ParameterSpace& space, const ParameterVector& u);

// Perturbed-parameter ensemble restricted to a MatchedGrid: inputs u^j and the
// simulator output at every grid cell, outputs(j, cell).
struct TrainingSet {
    std::shared_ptr<const MatchedGrid> grid;
    std::vector<ParameterVector> inputs;
    Eigen::MatrixXd outputs;  // n_members x n_cells, column i <-> grid pair i

    std::size_t n_members() const { return inputs.size(); }
};

enum class ObsStatus : std::uint8_t { Present, Missing, Absent };

// Observations and measurement variances aligned with the MatchedGrid pair
// order (one entry per pair; the value lives at the pair's sat point).
struct ObservationSet {
    std::shared_ptr<const MatchedGrid> grid;
    std::vector<ObsStatus> status;
    std::vector<double> z;         // valid where status == Present
    std::vector<double> meas_var;  // valid where status == Present

    std::size_t size() const { return status.size(); }
    std::size_t present_count() const;
};

// Per-cell variance budget: measurement + emulation + homoscedastic remainder.
struct NoiseModel {
    std::vector<double> meas_var;
    double other_var = 0.0;  // delta^2

    double total(std::size_t cell, double emu_var) const { return meas_var[cell] + emu_var + other_var; }
};

enum class SamplingStrategy { Uniform, LatinHypercube };

// i.i.d. uniform draws over the box (default), coordinate-stratified when
// LatinHypercube is selected. Bitwise deterministic given the seed.
std::vector<ParameterVector> sample_test_parameters(const ParameterSpace& space, int count,
                                                    std::uint64_t seed,
                                                    SamplingStrategy strategy = SamplingStrategy::Uniform);

// --- file schemas ---

ParameterSpace load_parameter_space(const std::string& path);
void save_parameter_space(const std::string& path, const ParameterSpace& space);

// Ensemble CSV: header "member,param:<name>...,cell:<lat>:<lon>:<time>...".
// Cell columns must cover every sim cell of `grid`; extra columns are ignored.
TrainingSet load_ensemble(const std::string& path, const ParameterSpace& space,
                          std::shared_ptr<const MatchedGrid> grid);
void save_ensemble(const std::string& path, const ParameterSpace& space, const TrainingSet& train);

// Observation CSV: header "lat,lon,time,z,meas_var"; empty z marks a missing
// retrieval. Rows are keyed by sat point; grid cells without a row are Absent.
ObservationSet load_observations(const std::string& path, std::shared_ptr<const MatchedGrid> grid);
void save_observations(const std::string& path, const ObservationSet& obs);

std::vector<std::string> test_parameter_header(const ParameterSpace& space);
void save_test_parameters(const std::string& path, const ParameterSpace& space,
                          const std::vector<ParameterVector>& tests);
std::vector<ParameterVector> load_test_parameters(const std::string& path, const ParameterSpace& space);

}  // namespace emubound
