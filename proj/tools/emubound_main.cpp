// SPDX-License-Identifier: Apache-2.0
//
// Pipeline driver: constrain simulator parameters by emulating each grid cell
// with a Gaussian process, estimating a data-driven discrepancy variance, and
// inverting a plausibility test into a confidence set.
//
//   emubound <stage> --manifest run.json [--force] [flag overrides]
//
// Stages: synth match train predict filter discrep test invert hm report
// Exit codes: 0 success, 2 precondition failure, 3 numerical failure.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "emubound/error.hpp"
#include "emubound/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string manifest_path;
    bool force = false;
    emubound::ManifestOverrides overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--manifest", args.manifest_path, "Run manifest JSON")->required();
    cmd->add_flag("--force", args.force, "Proceed despite config-hash drift in upstream artifacts");

    auto opt = [&](const char* name, auto& slot, const char* help) {
        cmd->add_option_function<std::decay_t<decltype(*slot)>>(
            name, [&slot](const auto& v) { slot = v; }, help);
    };
    opt("--workers", args.overrides.workers, "Worker count for parallel stages");
    opt("--seed", args.overrides.seed, "Global seed");
    opt("--level", args.overrides.level, "Significance level for test and hm stages (default 0.05)");
    opt("--q", args.overrides.q, "History-matching quantile level (1 = maximum, 0.5 = median)");
    opt("--gamma", args.overrides.gamma, "Outlier-filter tolerance gamma");
    opt("--threshold", args.overrides.threshold, "Outlier-filter exclusion threshold");
    opt("--restarts", args.overrides.restarts, "GP fit restarts");
    opt("--mc-samples", args.overrides.mc_samples, "Monte Carlo samples for hm critical values");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GP-emulator parameter constraint pipeline"};
    app.require_subcommand(1);

    std::vector<std::pair<std::string, CommonArgs>> stage_args;
    stage_args.reserve(emubound::kStageNames.size());
    for (const auto& stage : emubound::kStageNames) stage_args.emplace_back(stage, CommonArgs{});

    static const std::map<std::string, std::string> descriptions = {
        {"synth", "Generate a synthetic ensemble, observations and truth record"},
        {"match", "Match the simulation grid to the satellite grid"},
        {"train", "Train one GP emulator per matched cell"},
        {"predict", "Sample test parameters and tabulate emulator predictions"},
        {"filter", "Exclude outlier cells and form M*"},
        {"discrep", "Estimate the model-discrepancy variance by maximum likelihood"},
        {"test", "Run the plausibility test for every test parameter"},
        {"invert", "Invert test outcomes into a confidence set and projections"},
        {"hm", "History-matching comparison test and retained set"},
        {"report", "Summarize the run from its artifacts"},
    };
    for (auto& [stage, args] : stage_args) add_common(app.add_subcommand(stage, descriptions.at(stage)), args);

    CLI11_PARSE(app, argc, argv);

    for (auto& [stage, args] : stage_args) {
        if (!app.get_subcommand(stage)->parsed()) continue;
        try {
            auto manifest = emubound::load_manifest(args.manifest_path, args.overrides);
            auto result = emubound::run_stage(stage, manifest, args.force);
            if (result.status == emubound::StageStatus::Skipped) {
                std::cerr << stage << ": up to date, skipped\n";
            } else {
                std::cerr << stage << ": done\n";
            }
            for (const auto& out : result.outputs) std::cout << out << "\n";
            return 0;
        } catch (const emubound::Error& e) {
            std::cerr << stage << ": error: " << e.what() << "\n";
            return e.kind() == emubound::ErrorKind::Precondition ? 2 : 3;
        } catch (const std::exception& e) {
            std::cerr << stage << ": error: " << e.what() << "\n";
            return 3;
        }
    }
    return 0;
}
