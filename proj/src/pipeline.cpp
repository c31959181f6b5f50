// SPDX-License-Identifier: Apache-2.0
#include "emubound/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "emubound/confset.hpp"
#include "emubound/csv.hpp"
#include "emubound/error.hpp"
#include "emubound/rng.hpp"
#include "emubound/stats.hpp"

namespace emubound {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kStageNames = {"synth", "match",   "train",  "predict", "filter",
                                              "discrep", "test", "invert", "hm",      "report"};

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StageDependencyError(path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return hash_hex(h);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw SchemaError("cannot write file: " + tmp.string());
        out << content;
    }
    fs::rename(tmp, target);
}

namespace {

class StageContext {
public:
    StageContext(std::string stage, const RunManifest& manifest, bool force)
        : stage_(std::move(stage)), manifest_(manifest), force_(force) {}

    std::string wpath(const std::string& rel) const { return manifest_.workdir + "/" + rel; }

    // Inputs are declared before running; their hashes feed the no-op check and
    // their sidecars must carry the current config hash.
    void require(const std::string& path, bool check_hash = true) {
        if (!fs::exists(path)) throw StageDependencyError(path);
        inputs_.push_back({path, check_hash});
    }

    // Outputs exist and the recorded stamp (config hash + input hashes) matches.
    bool up_to_date(const std::vector<std::string>& output_paths) {
        for (const auto& out : output_paths)
            if (!fs::exists(out)) return false;
        fs::path stamp = stamp_path();
        if (!fs::exists(stamp)) return false;
        json recorded;
        try {
            std::ifstream in(stamp);
            in >> recorded;
        } catch (...) {
            return false;
        }
        return recorded == stamp_json();
    }

    void check_input_configs() {
        for (const auto& [path, check] : inputs_) {
            if (!check) continue;
            std::string meta_path = path + ".meta.json";
            if (!fs::exists(meta_path)) continue;  // plain input data has no sidecar
            json meta;
            try {
                std::ifstream in(meta_path);
                in >> meta;
            } catch (...) {
                throw SchemaError("unreadable artifact sidecar: " + meta_path);
            }
            std::string h = meta.value("config_hash", "");
            if (h != manifest_.config_hash) {
                if (force_) continue;
                throw ConfigMismatch("artifact " + path + " was produced under config " + h +
                                     " but the manifest hash is " + manifest_.config_hash +
                                     " (rerun upstream stages or pass --force)");
            }
        }
    }

    // Sidecar written next to every artifact this stage produces.
    void write_meta(const std::string& path, json extra = json::object()) {
        extra["config_hash"] = manifest_.config_hash;
        extra["stage"] = stage_;
        write_text_atomic(path + ".meta.json", extra.dump(2) + "\n");
    }

    void finish() { write_text_atomic(stamp_path().string(), stamp_json().dump(2) + "\n"); }

private:
    fs::path stamp_path() const { return fs::path(manifest_.workdir) / "stamps" / (stage_ + ".json"); }

    json stamp_json() const {
        json j;
        j["stage"] = stage_;
        j["config_hash"] = manifest_.config_hash;
        json in = json::object();
        for (const auto& [path, check] : inputs_) {
            // Workdir-relative keys keep stamps identical across relocated runs.
            std::string key = path;
            std::string prefix = manifest_.workdir + "/";
            if (key.rfind(prefix, 0) == 0) key = key.substr(prefix.size());
            in[key] = file_hash(path);
        }
        j["inputs"] = std::move(in);
        return j;
    }

    std::string stage_;
    const RunManifest& manifest_;
    bool force_;
    std::vector<std::pair<std::string, bool>> inputs_;
};

// --- artifact readers/writers used by several stages ---

void write_matched_grid(const std::string& path, const MatchedGrid& grid) {
    std::ostringstream out;
    out << "sim_lat,sim_lon,sim_time,sat_lat,sat_lon,sat_time\n";
    for (const auto& pr : grid.pairs()) {
        out << format_double(pr.sim.lat) << ',' << format_double(pr.sim.lon) << ','
            << format_int(pr.sim.time) << ',' << format_double(pr.sat.lat) << ','
            << format_double(pr.sat.lon) << ',' << format_int(pr.sat.time) << "\n";
    }
    write_text_atomic(path, out.str());
}

std::shared_ptr<const MatchedGrid> read_matched_grid(const std::string& path) {
    auto table = read_csv(path);
    json meta;
    {
        std::ifstream in(path + ".meta.json");
        if (!in) throw StageDependencyError(path + ".meta.json");
        in >> meta;
    }
    std::vector<GridPair> pairs;
    pairs.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        GridPair pr;
        pr.sim.lat = parse_double(row[0], path);
        pr.sim.lon = parse_double(row[1], path);
        pr.sim.time = parse_int(row[2], path);
        pr.sat.lat = parse_double(row[3], path);
        pr.sat.lon = parse_double(row[4], path);
        pr.sat.time = parse_int(row[5], path);
        pairs.push_back(pr);
    }
    return std::make_shared<const MatchedGrid>(std::move(pairs), meta.at("sim_lat_step").get<double>(),
                                               meta.at("sim_lon_step").get<double>(),
                                               meta.at("sim_time_step").get<std::int64_t>());
}

void write_mstar(const std::string& path, const MStar& mstar, const MatchedGrid& grid) {
    std::ostringstream out;
    out << "cell_index,lat,lon,time\n";
    for (int c : mstar.cells) {
        const auto& sim = grid.pair(static_cast<std::size_t>(c)).sim;
        out << c << ',' << format_double(sim.lat) << ',' << format_double(sim.lon) << ','
            << format_int(sim.time) << "\n";
    }
    write_text_atomic(path, out.str());
}

MStar read_mstar(const std::string& path, const MatchedGrid& grid) {
    auto table = read_csv(path);
    MStar mstar;
    for (const auto& row : table.rows) {
        int idx = static_cast<int>(parse_int(row[0], path));
        SpaceTimePoint sim;
        sim.lat = parse_double(row[1], path);
        sim.lon = parse_double(row[2], path);
        sim.time = parse_int(row[3], path);
        if (idx < 0 || static_cast<std::size_t>(idx) >= grid.size() ||
            !(grid.pair(static_cast<std::size_t>(idx)).sim == sim))
            throw SchemaError(path + ": M* entry does not match the grid");
        mstar.cells.push_back(idx);
    }
    return mstar;
}

void write_outcomes(const std::string& path, const std::vector<TestOutcome>& outcomes, bool hm_tagged,
                    const HMConfig* hm) {
    std::ostringstream out;
    out << (hm_tagged ? "k,statistic,critical,reject,mode,qn\n" : "k,statistic,critical,reject\n");
    for (const auto& o : outcomes) {
        out << o.k << ',' << format_double(o.statistic) << ',' << format_double(o.critical) << ','
            << (o.reject ? 1 : 0);
        if (hm_tagged) {
            out << ',' << (hm->mode == HMMode::Quantile ? "quantile" : "order") << ','
                << (hm->mode == HMMode::Quantile ? format_double(hm->q) : format_int(hm->order_n));
        }
        out << "\n";
    }
    write_text_atomic(path, out.str());
}

std::vector<TestOutcome> read_outcomes(const std::string& path, int df, double level) {
    auto table = read_csv(path);
    std::vector<TestOutcome> outcomes;
    outcomes.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        TestOutcome o;
        o.k = static_cast<int>(parse_int(row[0], path));
        o.statistic = parse_double(row[1], path);
        o.critical = parse_double(row[2], path);
        o.reject = parse_int(row[3], path) != 0;
        o.df = df;
        o.level = level;
        outcomes.push_back(o);
    }
    return outcomes;
}

void write_retained(const std::string& path, const ConfidenceSet& set, const ParameterSpace& space) {
    std::ostringstream out;
    out << join_csv_row(test_parameter_header(space)) << "\n";
    for (std::size_t i = 0; i < set.retained.size(); ++i) {
        std::vector<std::string> row{format_int(set.retained_k[i])};
        for (double v : set.retained[i].values) row.push_back(format_double(v));
        out << join_csv_row(row) << "\n";
    }
    write_text_atomic(path, out.str());
}

void write_projection_1d(const std::string& path, const Projection1D& proj) {
    std::ostringstream out;
    out << "u,statistic,critical,reject\n";
    for (std::size_t i = 0; i < proj.coordinate.size(); ++i) {
        out << format_double(proj.coordinate[i]) << ',' << format_double(proj.statistic[i]) << ','
            << format_double(proj.critical) << ',' << (proj.reject[i] ? 1 : 0) << "\n";
    }
    write_text_atomic(path, out.str());
}

void write_projection_2d(const std::string& path, const Projection2D& proj) {
    std::ostringstream out;
    out << "bin_i,bin_j,lo_i,hi_i,lo_j,hi_j,count,retained,proportion\n";
    for (int bi = 0; bi < proj.bins_i; ++bi) {
        for (int bj = 0; bj < proj.bins_j; ++bj) {
            auto f = static_cast<std::size_t>(proj.flat(bi, bj));
            out << bi << ',' << bj << ',' << format_double(proj.edges_i[static_cast<std::size_t>(bi)]) << ','
                << format_double(proj.edges_i[static_cast<std::size_t>(bi) + 1]) << ','
                << format_double(proj.edges_j[static_cast<std::size_t>(bj)]) << ','
                << format_double(proj.edges_j[static_cast<std::size_t>(bj) + 1]) << ',' << proj.count[f]
                << ',' << proj.retained_count[f] << ',' << format_double(proj.proportion[f]) << "\n";
        }
    }
    write_text_atomic(path, out.str());
}

std::string reason_name(ExclusionReason r) {
    switch (r) {
        case ExclusionReason::Kept: return "kept";
        case ExclusionReason::Outlier: return "outlier";
        case ExclusionReason::Missing: return "missing";
        case ExclusionReason::Unfitted: return "unfitted";
    }
    return "unknown";
}

std::string proj1d_name(const std::string& prefix, const std::string& param) {
    return prefix + "proj1d_" + param + ".csv";
}
std::string proj2d_name(const std::string& prefix, int i, int j) {
    return prefix + "proj2d_" + std::to_string(i) + "_" + std::to_string(j) + ".csv";
}

// --- stages ---

StageResult stage_synth(StageContext& ctx, const RunManifest& manifest) {
    std::vector<std::string> outputs = {manifest.path_parameter_space, manifest.path_ensemble,
                                        manifest.path_observations, ctx.wpath(artifact::kTruth)};
    if (ctx.up_to_date(outputs)) return {StageStatus::Skipped, outputs};

    auto spec = synthetic_spec_from_manifest(manifest);
    auto data = generate(spec);

    for (const auto& p : outputs) {
        fs::path parent = fs::path(p).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
    }
    save_parameter_space(manifest.path_parameter_space, spec.space);
    ctx.write_meta(manifest.path_parameter_space);
    save_ensemble(manifest.path_ensemble, spec.space, data.train);
    ctx.write_meta(manifest.path_ensemble);
    save_observations(manifest.path_observations, data.obs);
    ctx.write_meta(manifest.path_observations);
    save_truth(ctx.wpath(artifact::kTruth), data.truth, manifest.config_hash);
    ctx.write_meta(ctx.wpath(artifact::kTruth));

    ctx.finish();
    return {StageStatus::Ran, outputs};
}

StageResult stage_match(StageContext& ctx, const RunManifest& manifest) {
    std::vector<std::string> outputs = {ctx.wpath(artifact::kMatchedGrid)};
    if (ctx.up_to_date(outputs)) return {StageStatus::Skipped, outputs};

    auto grid = match_grids(manifest.sim_grid, manifest.sat_grid);
    write_matched_grid(ctx.wpath(artifact::kMatchedGrid), grid);
    ctx.write_meta(ctx.wpath(artifact::kMatchedGrid),
                   json{{"sim_lat_step", grid.sim_lat_step()},
                        {"sim_lon_step", grid.sim_lon_step()},
                        {"sim_time_step", grid.sim_time_step()},
                        {"pairs", grid.size()}});
    ctx.finish();
    return {StageStatus::Ran, outputs};
}

StageResult stage_train(StageContext& ctx, const RunManifest& manifest) {
    ctx.require(manifest.path_parameter_space);
    ctx.require(manifest.path_ensemble);
    ctx.require(ctx.wpath(artifact::kMatchedGrid));
    std::vector<std::string> outputs = {ctx.wpath(std::string(artifact::kFleetDir) + "/index.json")};
    if (ctx.up_to_date(outputs)) return {StageStatus::Skipped, {ctx.wpath(artifact::kFleetDir)}};
    ctx.check_input_configs();

    auto space = load_parameter_space(manifest.path_parameter_space);
    auto grid = read_matched_grid(ctx.wpath(artifact::kMatchedGrid));
    auto train = load_ensemble(manifest.path_ensemble, space, grid);

    FleetConfig config;
    config.gp.restarts = manifest.train_restarts;
    config.gp.max_iter = manifest.train_max_iter;
    for (const auto& d : space.dims) config.gp.dim_ranges.push_back(d.max - d.min);
    config.seed = derive_seed(manifest.seed, "train");
    config.workers = manifest.workers;

    auto fleet = train_fleet(train, config);
    save_fleet(ctx.wpath(artifact::kFleetDir), fleet, manifest.config_hash);
    ctx.write_meta(ctx.wpath(std::string(artifact::kFleetDir) + "/index.json"),
                   json{{"fitted", fleet.fitted_count()}, {"failures", fleet.failures.size()}});
    ctx.finish();
    return {StageStatus::Ran, {ctx.wpath(artifact::kFleetDir)}};
}

StageResult stage_predict(StageContext& ctx, const RunManifest& manifest) {
    ctx.require(manifest.path_parameter_space);
    ctx.require(manifest.path_ensemble);
    ctx.require(ctx.wpath(artifact::kMatchedGrid));
    ctx.require(ctx.wpath(std::string(artifact::kFleetDir) + "/index.json"));
    std::vector<std::string> outputs = {ctx.wpath(artifact::kPredictions),
                                        ctx.wpath(artifact::kPredictionsBin),
                                        ctx.wpath(artifact::kTestParams)};
    if (ctx.up_to_date(outputs))
        return {StageStatus::Skipped, {ctx.wpath(artifact::kPredictions)}};
    ctx.check_input_configs();

    auto space = load_parameter_space(manifest.path_parameter_space);
    auto grid = read_matched_grid(ctx.wpath(artifact::kMatchedGrid));
    auto train = load_ensemble(manifest.path_ensemble, space, grid);
    auto fleet = load_fleet(ctx.wpath(artifact::kFleetDir), train);

    std::uint64_t test_seed = derive_seed(manifest.seed, "tests");
    auto tests = sample_test_parameters(space, manifest.predict_count, test_seed, manifest.predict_strategy);
    auto table = predict_fleet(fleet, tests, manifest.workers);

    // Written under temp names, then renamed into place.
    std::string tmp_json = ctx.wpath(artifact::kPredictions) + ".tmp";
    std::string tmp_bin = ctx.wpath(artifact::kPredictionsBin) + ".tmp";
    PredictionTableMeta meta{manifest.config_hash, test_seed};
    save_predictions(tmp_json, tmp_bin, table, space, meta, artifact::kPredictionsBin);
    fs::rename(tmp_bin, ctx.wpath(artifact::kPredictionsBin));
    fs::rename(tmp_json, ctx.wpath(artifact::kPredictions));
    ctx.write_meta(ctx.wpath(artifact::kPredictions));
    ctx.write_meta(ctx.wpath(artifact::kPredictionsBin));

    std::string tmp_tests = ctx.wpath(artifact::kTestParams) + ".tmp";
    save_test_parameters(tmp_tests, space, tests);
    fs::rename(tmp_tests, ctx.wpath(artifact::kTestParams));
    ctx.write_meta(ctx.wpath(artifact::kTestParams));

    ctx.finish();
    return {StageStatus::Ran, {ctx.wpath(artifact::kPredictions), ctx.wpath(artifact::kTestParams)}};
}

struct LoadedCore {
    ParameterSpace space;
    std::shared_ptr<const MatchedGrid> grid;
    PredictionTable preds;
    ObservationSet obs;
};

LoadedCore load_core(StageContext& ctx, const RunManifest& manifest) {
    LoadedCore core;
    core.space = load_parameter_space(manifest.path_parameter_space);
    core.grid = read_matched_grid(ctx.wpath(artifact::kMatchedGrid));
    core.preds = load_predictions(ctx.wpath(artifact::kPredictions), core.space);
    core.obs = load_observations(manifest.path_observations, core.grid);
    return core;
}

void require_core(StageContext& ctx, const RunManifest& manifest) {
    ctx.require(manifest.path_parameter_space);
    ctx.require(manifest.path_observations);
    ctx.require(ctx.wpath(artifact::kMatchedGrid));
    ctx.require(ctx.wpath(artifact::kPredictions));
    ctx.require(ctx.wpath(artifact::kPredictionsBin));
}

StageResult stage_filter(StageContext& ctx, const RunManifest& manifest) {
    require_core(ctx, manifest);
    std::vector<std::string> outputs = {ctx.wpath(artifact::kFilterReport), ctx.wpath(artifact::kQQ),
                                        ctx.wpath(artifact::kMStar)};
    if (ctx.up_to_date(outputs)) return {StageStatus::Skipped, {ctx.wpath(artifact::kMStar)}};
    ctx.check_input_configs();

    auto core = load_core(ctx, manifest);
    auto report = find_outliers(core.preds, core.obs, manifest.filter);

    std::ostringstream out;
    out << "cell_index,lat,lon,time,min_j,reason\n";
    for (const auto& rec : report.cells) {
        const auto& sim = core.grid->pair(static_cast<std::size_t>(rec.cell_index)).sim;
        out << rec.cell_index << ',' << format_double(sim.lat) << ',' << format_double(sim.lon) << ','
            << format_int(sim.time) << ',' << (std::isnan(rec.min_j) ? "" : format_double(rec.min_j)) << ','
            << reason_name(rec.reason) << "\n";
    }
    write_text_atomic(ctx.wpath(artifact::kFilterReport), out.str());
    ctx.write_meta(ctx.wpath(artifact::kFilterReport),
                   json{{"gamma", report.gamma},
                        {"threshold", report.threshold},
                        {"best_k", report.best_k},
                        {"outlier_fraction", report.outlier_fraction},
                        {"missing", report.missing_count},
                        {"unfitted", report.unfitted_count}});

    auto qq = qq_data(core.preds, core.obs, report);
    std::ostringstream qq_out;
    qq_out << "half_normal_quantile,observed_j\n";
    for (const auto& [hq, oj] : qq) qq_out << format_double(hq) << ',' << format_double(oj) << "\n";
    write_text_atomic(ctx.wpath(artifact::kQQ), qq_out.str());
    ctx.write_meta(ctx.wpath(artifact::kQQ));

    MStar mstar{report.mstar};
    write_mstar(ctx.wpath(artifact::kMStar), mstar, *core.grid);
    ctx.write_meta(ctx.wpath(artifact::kMStar));

    ctx.finish();
    return {StageStatus::Ran, {ctx.wpath(artifact::kFilterReport), ctx.wpath(artifact::kMStar)}};
}

StageResult stage_discrep(StageContext& ctx, const RunManifest& manifest) {
    require_core(ctx, manifest);
    ctx.require(ctx.wpath(artifact::kMStar));
    std::vector<std::string> outputs = {ctx.wpath(artifact::kDiscrepancy), ctx.wpath(artifact::kPerK)};
    if (ctx.up_to_date(outputs)) return {StageStatus::Skipped, {ctx.wpath(artifact::kDiscrepancy)}};
    ctx.check_input_configs();

    auto core = load_core(ctx, manifest);
    auto mstar = read_mstar(ctx.wpath(artifact::kMStar), *core.grid);

    DiscrepancyConfig config;
    config.bracket = manifest.discrep_bracket;
    config.workers = manifest.workers;
    auto est = estimate(core.preds, core.obs, mstar, config);

    json j;
    j["config_hash"] = manifest.config_hash;
    j["delta2"] = est.delta2;
    j["best_k"] = est.best_k;
    j["loglik"] = est.loglik;
    write_text_atomic(ctx.wpath(artifact::kDiscrepancy), j.dump(2) + "\n");
    ctx.write_meta(ctx.wpath(artifact::kDiscrepancy));

    std::ostringstream out;
    out << "k,delta2,loglik\n";
    for (std::size_t k = 0; k < est.per_k_delta2.size(); ++k)
        out << k << ',' << format_double(est.per_k_delta2[k]) << ',' << format_double(est.per_k_loglik[k])
            << "\n";
    write_text_atomic(ctx.wpath(artifact::kPerK), out.str());
    ctx.write_meta(ctx.wpath(artifact::kPerK));

    ctx.finish();
    return {StageStatus::Ran, {ctx.wpath(artifact::kDiscrepancy), ctx.wpath(artifact::kPerK)}};
}

double read_delta2(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageDependencyError(path);
    json j;
    in >> j;
    return j.at("delta2").get<double>();
}

StageResult stage_test(StageContext& ctx, const RunManifest& manifest) {
    require_core(ctx, manifest);
    ctx.require(ctx.wpath(artifact::kMStar));
    ctx.require(ctx.wpath(artifact::kDiscrepancy));
    std::vector<std::string> outputs = {ctx.wpath(artifact::kOutcomes)};
    if (ctx.up_to_date(outputs)) return {StageStatus::Skipped, {ctx.wpath(artifact::kOutcomes)}};
    ctx.check_input_configs();

    auto core = load_core(ctx, manifest);
    auto mstar = read_mstar(ctx.wpath(artifact::kMStar), *core.grid);
    double delta2 = read_delta2(ctx.wpath(artifact::kDiscrepancy));

    auto outcomes = test_all(core.preds, core.obs, mstar, delta2, manifest.test_level, manifest.workers);
    write_outcomes(ctx.wpath(artifact::kOutcomes), outcomes, false, nullptr);
    ctx.write_meta(ctx.wpath(artifact::kOutcomes),
                   json{{"df", static_cast<int>(mstar.size())},
                        {"level", manifest.test_level},
                        {"delta2", delta2}});
    ctx.finish();
    return {StageStatus::Ran, {ctx.wpath(artifact::kOutcomes)}};
}

StageResult stage_invert(StageContext& ctx, const RunManifest& manifest) {
    ctx.require(manifest.path_parameter_space);
    ctx.require(ctx.wpath(artifact::kMatchedGrid));
    ctx.require(ctx.wpath(artifact::kTestParams));
    ctx.require(ctx.wpath(artifact::kOutcomes));
    ctx.require(ctx.wpath(artifact::kMStar));

    auto space = load_parameter_space(manifest.path_parameter_space);
    std::vector<std::string> outputs = {ctx.wpath(artifact::kRetained)};
    for (const auto& d : space.dims) outputs.push_back(ctx.wpath(proj1d_name("", d.name)));
    for (const auto& [i, j] : manifest.invert_pairs) outputs.push_back(ctx.wpath(proj2d_name("", i, j)));
    if (ctx.up_to_date(outputs)) return {StageStatus::Skipped, {ctx.wpath(artifact::kRetained)}};
    ctx.check_input_configs();

    auto grid = read_matched_grid(ctx.wpath(artifact::kMatchedGrid));
    auto mstar = read_mstar(ctx.wpath(artifact::kMStar), *grid);
    auto tests = load_test_parameters(ctx.wpath(artifact::kTestParams), space);
    auto outcomes =
        read_outcomes(ctx.wpath(artifact::kOutcomes), static_cast<int>(mstar.size()), manifest.test_level);
    if (outcomes.size() != tests.size()) throw SchemaError("outcomes and test parameters are misaligned");

    auto set = invert(outcomes, tests, manifest.config_hash);
    write_retained(ctx.wpath(artifact::kRetained), set, space);
    ctx.write_meta(ctx.wpath(artifact::kRetained),
                   json{{"retained", set.retained.size()}, {"tested", tests.size()}});

    for (std::size_t axis = 0; axis < space.size(); ++axis) {
        auto proj = project_1d(tests, outcomes, static_cast<int>(axis));
        write_projection_1d(ctx.wpath(proj1d_name("", space.dims[axis].name)), proj);
        ctx.write_meta(ctx.wpath(proj1d_name("", space.dims[axis].name)));
    }
    for (const auto& [i, j] : manifest.invert_pairs) {
        auto proj = project_2d(tests, outcomes, space, i, j, manifest.invert_bins);
        write_projection_2d(ctx.wpath(proj2d_name("", i, j)), proj);
        ctx.write_meta(ctx.wpath(proj2d_name("", i, j)));
    }

    ctx.finish();
    return {StageStatus::Ran, {ctx.wpath(artifact::kRetained)}};
}

StageResult stage_hm(StageContext& ctx, const RunManifest& manifest) {
    require_core(ctx, manifest);
    ctx.require(ctx.wpath(artifact::kMStar));
    ctx.require(ctx.wpath(artifact::kDiscrepancy));
    ctx.require(ctx.wpath(artifact::kTestParams));

    auto space = load_parameter_space(manifest.path_parameter_space);
    std::vector<std::string> outputs = {ctx.wpath(artifact::kHMOutcomes), ctx.wpath(artifact::kHMRetained)};
    for (const auto& d : space.dims) outputs.push_back(ctx.wpath(proj1d_name("hm_", d.name)));
    for (const auto& [i, j] : manifest.invert_pairs) outputs.push_back(ctx.wpath(proj2d_name("hm_", i, j)));
    if (ctx.up_to_date(outputs)) return {StageStatus::Skipped, {ctx.wpath(artifact::kHMOutcomes)}};
    ctx.check_input_configs();

    auto core = load_core(ctx, manifest);
    auto mstar = read_mstar(ctx.wpath(artifact::kMStar), *core.grid);
    double delta2 = read_delta2(ctx.wpath(artifact::kDiscrepancy));
    auto tests = load_test_parameters(ctx.wpath(artifact::kTestParams), core.space);

    HMConfig config = manifest.hm;
    auto outcomes = hm_test_all(core.preds, core.obs, mstar, delta2, config);
    write_outcomes(ctx.wpath(artifact::kHMOutcomes), outcomes, true, &config);
    ctx.write_meta(ctx.wpath(artifact::kHMOutcomes),
                   json{{"df", static_cast<int>(mstar.size())},
                        {"level", config.level},
                        {"delta2", delta2},
                        {"mc_samples", config.mc_samples},
                        {"mc_seed", config.seed}});

    auto set = invert(outcomes, tests, manifest.config_hash);
    write_retained(ctx.wpath(artifact::kHMRetained), set, core.space);
    ctx.write_meta(ctx.wpath(artifact::kHMRetained),
                   json{{"retained", set.retained.size()}, {"tested", tests.size()}});

    for (std::size_t axis = 0; axis < core.space.size(); ++axis) {
        auto proj = project_1d(tests, outcomes, static_cast<int>(axis));
        write_projection_1d(ctx.wpath(proj1d_name("hm_", core.space.dims[axis].name)), proj);
        ctx.write_meta(ctx.wpath(proj1d_name("hm_", core.space.dims[axis].name)));
    }
    for (const auto& [i, j] : manifest.invert_pairs) {
        auto proj = project_2d(tests, outcomes, core.space, i, j, manifest.invert_bins);
        write_projection_2d(ctx.wpath(proj2d_name("hm_", i, j)), proj);
        ctx.write_meta(ctx.wpath(proj2d_name("hm_", i, j)));
    }

    ctx.finish();
    return {StageStatus::Ran, {ctx.wpath(artifact::kHMOutcomes), ctx.wpath(artifact::kHMRetained)}};
}

StageResult stage_report(StageContext& ctx, const RunManifest& manifest) {
    require_core(ctx, manifest);
    ctx.require(ctx.wpath(artifact::kMStar));
    ctx.require(ctx.wpath(artifact::kFilterReport));
    ctx.require(ctx.wpath(artifact::kDiscrepancy));
    ctx.require(ctx.wpath(artifact::kOutcomes));
    ctx.require(ctx.wpath(artifact::kRetained));
    ctx.require(ctx.wpath(artifact::kTestParams));
    std::vector<std::string> outputs = {ctx.wpath(artifact::kSummaryTxt), ctx.wpath(artifact::kSummaryCsv)};
    if (ctx.up_to_date(outputs)) return {StageStatus::Skipped, {ctx.wpath(artifact::kSummaryTxt)}};
    ctx.check_input_configs();

    auto core = load_core(ctx, manifest);
    auto mstar = read_mstar(ctx.wpath(artifact::kMStar), *core.grid);

    json disc;
    {
        std::ifstream in(ctx.wpath(artifact::kDiscrepancy));
        in >> disc;
    }
    double delta2 = disc.at("delta2").get<double>();
    int best_k = disc.at("best_k").get<int>();

    auto outcomes =
        read_outcomes(ctx.wpath(artifact::kOutcomes), static_cast<int>(mstar.size()), manifest.test_level);
    auto retained_table = read_csv(ctx.wpath(artifact::kRetained));

    // Mean measurement variance and mean emulation variance at the best k, over M*.
    KahanSum meas_acc, emu_acc;
    for (int cell : mstar.cells) {
        meas_acc.add(core.obs.meas_var[static_cast<std::size_t>(cell)]);
        emu_acc.add(core.preds.var(core.preds.row_of_cell(cell), best_k));
    }
    double mean_meas = meas_acc.value() / static_cast<double>(mstar.size());
    double mean_emu = emu_acc.value() / static_cast<double>(mstar.size());

    std::size_t n_reject = 0;
    for (const auto& o : outcomes)
        if (o.reject) ++n_reject;
    double critical = outcomes.empty() ? 0.0 : outcomes.front().critical;

    // A coordinate is marginally constrained when some nonempty bin of its
    // range contains only rejected test points.
    auto tests = load_test_parameters(ctx.wpath(artifact::kTestParams), core.space);
    const int bins = manifest.invert_bins;
    std::vector<std::string> constrained;
    for (std::size_t axis = 0; axis < core.space.size(); ++axis) {
        const auto& d = core.space.dims[axis];
        std::vector<int> count(static_cast<std::size_t>(bins), 0), kept(static_cast<std::size_t>(bins), 0);
        for (std::size_t k = 0; k < tests.size(); ++k) {
            double t = (tests[k].values[axis] - d.min) / (d.max - d.min);
            int b = std::clamp(static_cast<int>(t * bins), 0, bins - 1);
            count[static_cast<std::size_t>(b)] += 1;
            if (!outcomes[k].reject) kept[static_cast<std::size_t>(b)] += 1;
        }
        bool flag = false;
        for (int b = 0; b < bins; ++b)
            if (count[static_cast<std::size_t>(b)] > 0 && kept[static_cast<std::size_t>(b)] == 0) flag = true;
        if (flag) constrained.push_back(d.name);
    }

    json fr_meta;
    {
        std::ifstream in(ctx.wpath(artifact::kFilterReport) + ".meta.json");
        in >> fr_meta;
    }

    std::size_t retained_count = retained_table.rows.size();
    std::ostringstream txt;
    txt << "pipeline summary\n";
    txt << "  matched cells |M|        : " << core.grid->size() << "\n";
    txt << "  retained cells |M*|      : " << mstar.size() << "\n";
    txt << "  outlier fraction         : " << format_double(fr_meta.at("outlier_fraction").get<double>())
        << "\n";
    txt << "  missing cells            : " << fr_meta.at("missing").get<std::size_t>() << "\n";
    txt << "  unfitted cells           : " << fr_meta.at("unfitted").get<std::size_t>() << "\n";
    txt << "  delta2 (MLE)             : " << format_double(delta2) << "\n";
    txt << "  mean measurement variance: " << format_double(mean_meas) << "\n";
    txt << "  mean emulator variance   : " << format_double(mean_emu) << " (at best-fit test " << best_k
        << ")\n";
    txt << "  test df                  : " << mstar.size() << "\n";
    txt << "  test level               : " << format_double(manifest.test_level) << "\n";
    txt << "  critical value           : " << format_double(critical) << "\n";
    txt << "  tested parameters        : " << outcomes.size() << "\n";
    txt << "  rejected                 : " << n_reject << "\n";
    txt << "  retained                 : " << retained_count << "\n";
    if (retained_count == 0) txt << "  no parameter retained\n";
    txt << "  marginally constrained   : ";
    if (constrained.empty()) {
        txt << "(none)\n";
    } else {
        for (std::size_t i = 0; i < constrained.size(); ++i) txt << (i ? "," : "") << constrained[i];
        txt << "\n";
    }
    write_text_atomic(ctx.wpath(artifact::kSummaryTxt), txt.str());
    ctx.write_meta(ctx.wpath(artifact::kSummaryTxt));

    std::ostringstream csv;
    csv << "key,value\n";
    csv << "matched_cells," << core.grid->size() << "\n";
    csv << "mstar_cells," << mstar.size() << "\n";
    csv << "outlier_fraction," << format_double(fr_meta.at("outlier_fraction").get<double>()) << "\n";
    csv << "missing_cells," << fr_meta.at("missing").get<std::size_t>() << "\n";
    csv << "unfitted_cells," << fr_meta.at("unfitted").get<std::size_t>() << "\n";
    csv << "delta2," << format_double(delta2) << "\n";
    csv << "mean_meas_var," << format_double(mean_meas) << "\n";
    csv << "mean_emu_var," << format_double(mean_emu) << "\n";
    csv << "df," << mstar.size() << "\n";
    csv << "level," << format_double(manifest.test_level) << "\n";
    csv << "critical," << format_double(critical) << "\n";
    csv << "tested," << outcomes.size() << "\n";
    csv << "rejected," << n_reject << "\n";
    csv << "retained," << retained_count << "\n";
    std::string names;
    for (std::size_t i = 0; i < constrained.size(); ++i) names += (i ? ";" : "") + constrained[i];
    csv << "constrained_axes," << names << "\n";
    write_text_atomic(ctx.wpath(artifact::kSummaryCsv), csv.str());
    ctx.write_meta(ctx.wpath(artifact::kSummaryCsv));

    ctx.finish();
    return {StageStatus::Ran, {ctx.wpath(artifact::kSummaryTxt), ctx.wpath(artifact::kSummaryCsv)}};
}

}  // namespace

StageResult run_stage(const std::string& stage, const RunManifest& manifest, bool force) {
    StageContext ctx(stage, manifest, force);
    fs::create_directories(manifest.workdir);
    if (stage == "synth") return stage_synth(ctx, manifest);
    if (stage == "match") return stage_match(ctx, manifest);
    if (stage == "train") return stage_train(ctx, manifest);
    if (stage == "predict") return stage_predict(ctx, manifest);
    if (stage == "filter") return stage_filter(ctx, manifest);
    if (stage == "discrep") return stage_discrep(ctx, manifest);
    if (stage == "test") return stage_test(ctx, manifest);
    if (stage == "invert") return stage_invert(ctx, manifest);
    if (stage == "hm") return stage_hm(ctx, manifest);
    if (stage == "report") return stage_report(ctx, manifest);
    throw SchemaError("unknown stage '" + stage + "'");
}

}  // namespace emubound
