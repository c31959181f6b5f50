// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "emubound/error.hpp"
#include "emubound/pipeline.hpp"

using namespace emubound;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json base_manifest(const std::string& workdir) {
    json m;
    m["workdir"] = workdir;
    m["seed"] = 7;
    m["workers"] = 1;
    m["grids"]["sim"] = {{"lat_origin", 0.0}, {"lat_step", 1.0},  {"lat_count", 12},
                         {"lon_origin", 5.0}, {"lon_step", 2.0},  {"lon_count", 1},
                         {"time_origin", 0},  {"time_step", 3600}, {"time_count", 1}};
    m["synth"] = {{"parameter_space", json::array({{{"name", "a"}, {"min", 0.0}, {"max", 1.0}},
                                                   {{"name", "b"}, {"min", -1.0}, {"max", 2.0}}})},
                  {"u_star", json::array({0.4, 0.7})},
                  {"delta2", 0.004},
                  {"meas_var", 0.01},
                  {"n_members", 14},
                  {"model_seed", 3}};
    m["train"] = {{"restarts", 2}, {"max_iter", 50}};
    m["predict"] = {{"count", 40}};
    m["invert"] = {{"bins", 5}, {"pairs", json::array({json::array({0, 1})})}};
    m["hm"] = {{"q", 0.75}, {"mc_samples", 5000}};
    return m;
}

const std::vector<std::string> kChain = {"synth", "match",  "train", "predict", "filter",
                                         "discrep", "test", "invert", "hm",     "report"};

void run_chain(const RunManifest& manifest) {
    for (const auto& stage : kChain) run_stage(stage, manifest);
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& p) : path(p) { fs::remove_all(path); }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("full synthetic chain produces all artifacts") {
    TempDir wd("pipe_wd_full");
    auto manifest = manifest_from_json(base_manifest(wd.path.string()));
    run_chain(manifest);

    for (const char* name :
         {artifact::kTruth, artifact::kMatchedGrid, artifact::kPredictions, artifact::kPredictionsBin,
          artifact::kTestParams, artifact::kFilterReport, artifact::kQQ, artifact::kMStar,
          artifact::kDiscrepancy, artifact::kPerK, artifact::kOutcomes, artifact::kRetained,
          artifact::kHMOutcomes, artifact::kHMRetained, artifact::kSummaryTxt, artifact::kSummaryCsv}) {
        CAPTURE(name);
        CHECK(fs::exists(wd.path / name));
        CHECK(fs::exists(wd.path / (std::string(name) + ".meta.json")));
    }
    CHECK(fs::exists(wd.path / "fleet" / "index.json"));
    CHECK(fs::exists(wd.path / "proj1d_a.csv"));
    CHECK(fs::exists(wd.path / "proj1d_b.csv"));
    CHECK(fs::exists(wd.path / "proj2d_0_1.csv"));
    CHECK(fs::exists(wd.path / "hm_proj2d_0_1.csv"));

    // The summary echoes the discrepancy estimate next to the variance scales.
    auto summary = file_bytes(wd.path / artifact::kSummaryTxt);
    CHECK(summary.find("delta2 (MLE)") != std::string::npos);
    CHECK(summary.find("mean measurement variance") != std::string::npos);
    CHECK(summary.find("mean emulator variance") != std::string::npos);
}

TEST_CASE("rerunning a stage with unchanged config is a no-op") {
    TempDir wd("pipe_wd_noop");
    auto manifest = manifest_from_json(base_manifest(wd.path.string()));
    run_chain(manifest);

    auto before = file_bytes(wd.path / "fleet" / "index.json");
    auto mtime = fs::last_write_time(wd.path / "fleet" / "index.json");
    auto result = run_stage("train", manifest);
    CHECK(result.status == StageStatus::Skipped);
    CHECK(fs::last_write_time(wd.path / "fleet" / "index.json") == mtime);
    CHECK(file_bytes(wd.path / "fleet" / "index.json") == before);

    // Rerunning every stage skips every stage.
    for (const auto& stage : kChain) CHECK(run_stage(stage, manifest).status == StageStatus::Skipped);
}

TEST_CASE("config drift is refused without force") {
    TempDir wd("pipe_wd_drift");
    auto raw = base_manifest(wd.path.string());
    auto manifest = manifest_from_json(raw);
    run_chain(manifest);

    // Change the test level: the semantic hash moves, so 'test' refuses to
    // consume predictions produced under the old hash.
    auto drifted_raw = raw;
    drifted_raw["test"]["level"] = 0.2;
    auto drifted = manifest_from_json(drifted_raw);
    CHECK(drifted.config_hash != manifest.config_hash);
    CHECK_THROWS_AS(run_stage("test", drifted), ConfigMismatch);
    // --force proceeds and stamps the outcome with the new hash.
    auto forced = run_stage("test", drifted, true);
    CHECK(forced.status == StageStatus::Ran);

    // Changing workers or the workdir does not move the hash.
    auto relocated = raw;
    relocated["workers"] = 8;
    relocated["workdir"] = "elsewhere";
    CHECK(manifest_from_json(relocated).config_hash == manifest.config_hash);
}

TEST_CASE("missing upstream artifacts name the missing file") {
    TempDir wd("pipe_wd_missing");
    auto manifest = manifest_from_json(base_manifest(wd.path.string()));
    run_stage("synth", manifest);
    run_stage("match", manifest);
    try {
        run_stage("predict", manifest);
        FAIL("expected StageDependencyError");
    } catch (const StageDependencyError& e) {
        CHECK(std::string(e.what()).find("fleet/index.json") != std::string::npos);
    }
}

TEST_CASE("manifest defaults are hash-stable and field order does not matter") {
    auto a = base_manifest("wd");
    auto b = base_manifest("wd");
    b["test"] = {{"level", 0.05}};  // explicit default == omitted default
    CHECK(manifest_from_json(a).config_hash == manifest_from_json(b).config_hash);

    // Key order in the input JSON is irrelevant (objects are canonicalized).
    json reordered;
    reordered["synth"] = a["synth"];
    reordered["workers"] = 1;
    reordered["seed"] = 7;
    reordered["workdir"] = "wd";
    reordered["grids"] = a["grids"];
    reordered["train"] = a["train"];
    reordered["predict"] = a["predict"];
    reordered["invert"] = a["invert"];
    reordered["hm"] = a["hm"];
    CHECK(manifest_from_json(reordered).config_hash == manifest_from_json(a).config_hash);
}

TEST_CASE("flag overrides change the semantic hash") {
    auto raw = base_manifest("wd");
    auto plain = manifest_from_json(raw);
    ManifestOverrides ov;
    ov.level = 0.1;
    auto overridden = manifest_from_json(raw, ov);
    CHECK(overridden.config_hash != plain.config_hash);
    CHECK(overridden.test_level == 0.1);
    CHECK(overridden.hm.level == 0.1);

    ManifestOverrides workers_only;
    workers_only.workers = 16;
    CHECK(manifest_from_json(raw, workers_only).config_hash == plain.config_hash);
}

TEST_CASE("pipeline output is byte-identical across worker counts") {
    TempDir wd1("pipe_wd_w1");
    TempDir wd8("pipe_wd_w8");
    auto raw1 = base_manifest(wd1.path.string());
    raw1["workers"] = 1;
    auto raw8 = base_manifest(wd8.path.string());
    raw8["workers"] = 8;
    run_chain(manifest_from_json(raw1));
    run_chain(manifest_from_json(raw8));

    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(wd1.path)) {
        if (!entry.is_regular_file()) continue;
        auto rel = fs::relative(entry.path(), wd1.path);
        CAPTURE(rel.string());
        REQUIRE(fs::exists(wd8.path / rel));
        CHECK(file_bytes(entry.path()) == file_bytes(wd8.path / rel));
        ++compared;
    }
    CHECK(compared > 20);
}

TEST_CASE("unknown stage is rejected") {
    auto manifest = manifest_from_json(base_manifest("wd_unknown"));
    CHECK_THROWS_AS(run_stage("bogus", manifest), SchemaError);
    fs::remove_all("wd_unknown");
}
