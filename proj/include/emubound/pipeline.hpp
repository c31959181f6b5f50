// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "emubound/manifest.hpp"

namespace emubound {

enum class StageStatus { Ran, Skipped };

struct StageResult {
    StageStatus status = StageStatus::Ran;
    std::vector<std::string> outputs;
};

extern const std::vector<std::string> kStageNames;
// synth, match, train, predict, filter, discrep, test, invert, hm, report

// Runs one pipeline stage. Outputs are written atomically (temp-then-rename),
// each with a sidecar carrying the manifest's config hash. A rerun with
// unchanged inputs and config is a no-op; upstream artifacts produced under a
// different config hash are refused unless force is set.
StageResult run_stage(const std::string& stage, const RunManifest& manifest, bool force = false);

// Workdir-relative artifact names.
namespace artifact {
inline constexpr const char* kTruth = "truth.json";
inline constexpr const char* kMatchedGrid = "matched_grid.csv";
inline constexpr const char* kFleetDir = "fleet";
inline constexpr const char* kPredictions = "predictions.json";
inline constexpr const char* kPredictionsBin = "predictions.bin";
inline constexpr const char* kTestParams = "test_params.csv";
inline constexpr const char* kFilterReport = "filter_report.csv";
inline constexpr const char* kQQ = "qq.csv";
inline constexpr const char* kMStar = "mstar.csv";
inline constexpr const char* kDiscrepancy = "discrepancy.json";
inline constexpr const char* kPerK = "per_k.csv";
inline constexpr const char* kOutcomes = "outcomes.csv";
inline constexpr const char* kRetained = "retained.csv";
inline constexpr const char* kHMOutcomes = "hm_outcomes.csv";
inline constexpr const char* kHMRetained = "hm_retained.csv";
inline constexpr const char* kSummaryTxt = "summary.txt";
inline constexpr const char* kSummaryCsv = "summary.csv";
}  // namespace artifact

// Helpers shared with tests.
std::string file_hash(const std::string& path);
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace emubound
