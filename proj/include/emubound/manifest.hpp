// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emubound/discrepancy.hpp"
#include "emubound/history_matching.hpp"
#include "emubound/outlier.hpp"
#include "emubound/synthetic.hpp"

namespace emubound {

// Declarative run description. The config hash covers the semantic fields only:
// workdir, file paths and the worker count are execution details that must not
// invalidate (or differentiate) artifacts, so they are excluded.
struct RunManifest {
    std::string workdir;
    std::string path_parameter_space;
    std::string path_ensemble;
    std::string path_observations;

    RegularGrid sim_grid;
    RegularGrid sat_grid;

    std::uint64_t seed = 0;
    int workers = 1;

    std::optional<nlohmann::json> synth;  // synthetic-stage block, grids/seed filled at run time

    int train_restarts = 5;
    int train_max_iter = 120;

    int predict_count = 5000;
    SamplingStrategy predict_strategy = SamplingStrategy::Uniform;

    FilterConfig filter;

    BracketConfig discrep_bracket;

    double test_level = 0.05;

    HMConfig hm;

    int invert_bins = 20;
    std::vector<std::pair<int, int>> invert_pairs;

    nlohmann::json effective;  // fully-defaulted manifest JSON
    std::string config_hash;   // hex FNV-1a of the canonical semantic config
};

struct ManifestOverrides {
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
    std::optional<double> level;
    std::optional<double> q;
    std::optional<double> gamma;
    std::optional<double> threshold;
    std::optional<int> restarts;
    std::optional<int> mc_samples;
};

RunManifest load_manifest(const std::string& path, const ManifestOverrides& overrides = {});
RunManifest manifest_from_json(nlohmann::json raw, const ManifestOverrides& overrides = {});

// The synth block resolved against the manifest grids and seed.
SyntheticSpec synthetic_spec_from_manifest(const RunManifest& manifest);

}  // namespace emubound
