// SPDX-License-Identifier: Apache-2.0
#include "emubound/manifest.hpp"

#include <fstream>

#include "emubound/error.hpp"
#include "emubound/hash.hpp"
#include "emubound/rng.hpp"

namespace emubound {

using nlohmann::json;

namespace {

RegularGrid grid_from_json(const json& j, const std::string& label) {
    RegularGrid g;
    try {
        g.lat_origin = j.at("lat_origin").get<double>();
        g.lat_step = j.at("lat_step").get<double>();
        g.lat_count = j.at("lat_count").get<int>();
        g.lon_origin = j.at("lon_origin").get<double>();
        g.lon_step = j.at("lon_step").get<double>();
        g.lon_count = j.at("lon_count").get<int>();
        g.time_origin = j.at("time_origin").get<std::int64_t>();
        g.time_step = j.at("time_step").get<std::int64_t>();
        g.time_count = j.at("time_count").get<int>();
    } catch (const json::exception& e) {
        throw SchemaError("manifest: bad grid block '" + label + "': " + e.what());
    }
    return g;
}

// Fill every optional field so that explicitly writing a default value and
// omitting it hash identically.
json apply_defaults(json m) {
    if (!m.is_object()) throw SchemaError("manifest: expected a JSON object");
    if (!m.contains("workdir")) throw SchemaError("manifest: missing 'workdir'");
    if (!m.contains("grids") || !m["grids"].contains("sim"))
        throw SchemaError("manifest: missing 'grids.sim'");
    if (!m["grids"].contains("sat")) m["grids"]["sat"] = m["grids"]["sim"];

    json& paths = m["paths"];
    if (!paths.is_object()) paths = json::object();
    std::string wd = m["workdir"].get<std::string>();
    if (!paths.contains("parameter_space")) paths["parameter_space"] = wd + "/parameter_space.json";
    if (!paths.contains("ensemble")) paths["ensemble"] = wd + "/ensemble.csv";
    if (!paths.contains("observations")) paths["observations"] = wd + "/observations.csv";

    if (!m.contains("seed")) m["seed"] = 0;
    if (!m.contains("workers")) m["workers"] = 1;

    json& train = m["train"];
    if (!train.is_object()) train = json::object();
    if (!train.contains("restarts")) train["restarts"] = 5;
    if (!train.contains("max_iter")) train["max_iter"] = 120;

    json& predict = m["predict"];
    if (!predict.is_object()) predict = json::object();
    if (!predict.contains("count")) predict["count"] = 5000;
    if (!predict.contains("strategy")) predict["strategy"] = "uniform";

    json& filter = m["filter"];
    if (!filter.is_object()) filter = json::object();
    if (!filter.contains("gamma")) filter["gamma"] = nullptr;
    if (!filter.contains("threshold")) filter["threshold"] = nullptr;

    json& discrep = m["discrep"];
    if (!discrep.is_object()) discrep = json::object();
    if (!discrep.contains("upper_factor")) discrep["upper_factor"] = 10.0;
    if (!discrep.contains("abs_tol")) discrep["abs_tol"] = 1e-10;

    json& test = m["test"];
    if (!test.is_object()) test = json::object();
    if (!test.contains("level")) test["level"] = 0.05;

    json& hm = m["hm"];
    if (!hm.is_object()) hm = json::object();
    if (!hm.contains("mode")) hm["mode"] = "quantile";
    if (!hm.contains("q")) hm["q"] = 0.75;
    if (!hm.contains("order_n")) hm["order_n"] = 1;
    if (!hm.contains("level")) hm["level"] = 0.05;
    if (!hm.contains("mc_samples")) hm["mc_samples"] = 100000;

    json& invert = m["invert"];
    if (!invert.is_object()) invert = json::object();
    if (!invert.contains("bins")) invert["bins"] = 20;
    if (!invert.contains("pairs")) invert["pairs"] = json::array();

    if (m.contains("synth")) {
        json& synth = m["synth"];
        if (!synth.is_object()) throw SchemaError("manifest: 'synth' must be an object");
        if (!synth.contains("parameter_space")) throw SchemaError("manifest: synth.parameter_space is required");
        if (!synth.contains("u_star")) throw SchemaError("manifest: synth.u_star is required");
        if (!synth.contains("delta2")) synth["delta2"] = 0.0;
        if (!synth.contains("meas_var")) synth["meas_var"] = 0.02;
        if (!synth.contains("n_members")) synth["n_members"] = 20;
        if (!synth.contains("model_seed")) synth["model_seed"] = m["seed"];
        if (!synth.contains("family")) synth["family"] = "ridge";
        if (!synth.contains("planted_outliers")) synth["planted_outliers"] = 0;
        if (!synth.contains("outlier_shift_sigmas")) synth["outlier_shift_sigmas"] = 10.0;
        if (!synth.contains("missing_fraction")) synth["missing_fraction"] = 0.0;
    }
    return m;
}

std::string semantic_hash(const json& effective) {
    json semantic = effective;
    semantic.erase("workdir");
    semantic.erase("paths");
    semantic.erase("workers");
    // nlohmann objects are key-sorted, so the dump is canonical.
    return hash_hex(fnv1a64(semantic.dump()));
}

}  // namespace

RunManifest manifest_from_json(json raw, const ManifestOverrides& overrides) {
    if (!raw.is_object()) throw SchemaError("manifest: expected a JSON object");
    if (overrides.workers) raw["workers"] = *overrides.workers;
    if (overrides.seed) raw["seed"] = *overrides.seed;
    if (overrides.level) {
        raw["test"]["level"] = *overrides.level;
        raw["hm"]["level"] = *overrides.level;
    }
    if (overrides.q) raw["hm"]["q"] = *overrides.q;
    if (overrides.gamma) raw["filter"]["gamma"] = *overrides.gamma;
    if (overrides.threshold) raw["filter"]["threshold"] = *overrides.threshold;
    if (overrides.restarts) raw["train"]["restarts"] = *overrides.restarts;
    if (overrides.mc_samples) raw["hm"]["mc_samples"] = *overrides.mc_samples;

    json effective = apply_defaults(std::move(raw));

    RunManifest m;
    try {
        m.workdir = effective.at("workdir").get<std::string>();
        m.path_parameter_space = effective.at("paths").at("parameter_space").get<std::string>();
        m.path_ensemble = effective.at("paths").at("ensemble").get<std::string>();
        m.path_observations = effective.at("paths").at("observations").get<std::string>();
        m.sim_grid = grid_from_json(effective.at("grids").at("sim"), "sim");
        m.sat_grid = grid_from_json(effective.at("grids").at("sat"), "sat");
        m.seed = effective.at("seed").get<std::uint64_t>();
        m.workers = effective.at("workers").get<int>();
        if (effective.contains("synth")) m.synth = effective.at("synth");

        m.train_restarts = effective.at("train").at("restarts").get<int>();
        m.train_max_iter = effective.at("train").at("max_iter").get<int>();

        m.predict_count = effective.at("predict").at("count").get<int>();
        std::string strategy = effective.at("predict").at("strategy").get<std::string>();
        if (strategy == "uniform") {
            m.predict_strategy = SamplingStrategy::Uniform;
        } else if (strategy == "latin_hypercube") {
            m.predict_strategy = SamplingStrategy::LatinHypercube;
        } else {
            throw SchemaError("manifest: unknown sampling strategy '" + strategy + "'");
        }

        const auto& filter = effective.at("filter");
        if (!filter.at("gamma").is_null()) m.filter.gamma = filter.at("gamma").get<double>();
        if (!filter.at("threshold").is_null()) m.filter.threshold = filter.at("threshold").get<double>();

        m.discrep_bracket.upper_factor = effective.at("discrep").at("upper_factor").get<double>();
        m.discrep_bracket.abs_tol = effective.at("discrep").at("abs_tol").get<double>();

        m.test_level = effective.at("test").at("level").get<double>();

        std::string mode = effective.at("hm").at("mode").get<std::string>();
        if (mode == "quantile") {
            m.hm.mode = HMMode::Quantile;
        } else if (mode == "order") {
            m.hm.mode = HMMode::OrderStat;
        } else {
            throw SchemaError("manifest: unknown hm mode '" + mode + "'");
        }
        m.hm.q = effective.at("hm").at("q").get<double>();
        m.hm.order_n = effective.at("hm").at("order_n").get<int>();
        m.hm.level = effective.at("hm").at("level").get<double>();
        m.hm.mc_samples = effective.at("hm").at("mc_samples").get<int>();

        m.invert_bins = effective.at("invert").at("bins").get<int>();
        for (const auto& pr : effective.at("invert").at("pairs")) {
            if (!pr.is_array() || pr.size() != 2) throw SchemaError("manifest: invert.pairs entries must be [i, j]");
            m.invert_pairs.emplace_back(pr[0].get<int>(), pr[1].get<int>());
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("manifest: ") + e.what());
    }

    m.hm.seed = derive_seed(m.seed, "hm_critical");
    m.hm.workers = m.workers;
    m.effective = std::move(effective);
    m.config_hash = semantic_hash(m.effective);
    return m;
}

RunManifest load_manifest(const std::string& path, const ManifestOverrides& overrides) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open manifest: " + path);
    json raw;
    try {
        in >> raw;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": invalid JSON: " + e.what());
    }
    return manifest_from_json(std::move(raw), overrides);
}

SyntheticSpec synthetic_spec_from_manifest(const RunManifest& manifest) {
    if (!manifest.synth) throw SchemaError("manifest has no 'synth' block");
    const json& s = *manifest.synth;
    SyntheticSpec spec;
    try {
        for (const auto& item : s.at("parameter_space")) {
            ParameterSpace::Dim d;
            d.name = item.at("name").get<std::string>();
            d.min = item.at("min").get<double>();
            d.max = item.at("max").get<double>();
            spec.space.dims.push_back(std::move(d));
        }
        spec.u_star.values = s.at("u_star").get<std::vector<double>>();
        spec.delta2 = s.at("delta2").get<double>();
        spec.meas_var = s.at("meas_var").get<double>();
        spec.n_members = s.at("n_members").get<int>();
        spec.model_seed = s.at("model_seed").get<std::uint64_t>();
        spec.family = s.at("family").get<std::string>();
        spec.planted_outliers = s.at("planted_outliers").get<int>();
        spec.outlier_shift_sigmas = s.at("outlier_shift_sigmas").get<double>();
        spec.missing_fraction = s.at("missing_fraction").get<double>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("manifest synth block: ") + e.what());
    }
    spec.space.validate();
    spec.sim_grid = manifest.sim_grid;
    spec.sat_grid = manifest.sat_grid;
    spec.seed = derive_seed(manifest.seed, "synth");
    return spec;
}

}  // namespace emubound
