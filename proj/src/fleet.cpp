// SPDX-License-Identifier: Apache-2.0
#include "emubound/fleet.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>
#include <omp.h>

#include "emubound/csv.hpp"
#include "emubound/error.hpp"

namespace emubound {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t EmulatorFleet::fitted_count() const {
    std::size_t n = 0;
    for (const auto& c : cells)
        if (c) ++n;
    return n;
}

namespace {

struct CellFitOutcome {
    std::optional<CellEmulator> emulator;
    std::string error;
};

CellFitOutcome fit_cell(const TrainingSet& train, const FleetConfig& config, std::size_t cell) {
    const auto n = train.n_members();
    std::vector<double> outputs(n);
    for (std::size_t j = 0; j < n; ++j)
        outputs[j] = train.outputs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(cell));
    GpFitConfig gp = config.gp;
    gp.seed = mix64(config.seed, cell_key(train.grid->pair(cell).sim));
    CellFitOutcome outcome;
    try {
        outcome.emulator = fit(train.inputs, outputs, gp);
    } catch (const Error& e) {
        outcome.error = e.what();
    }
    return outcome;
}

EmulatorFleet gather(const TrainingSet& train, std::vector<CellFitOutcome>&& outcomes) {
    EmulatorFleet fleet;
    fleet.grid = train.grid;
    fleet.cells.resize(outcomes.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i].emulator) {
            fleet.cells[i] = std::move(outcomes[i].emulator);
        } else {
            fleet.failures.push_back({static_cast<int>(i), outcomes[i].error});
        }
    }
    return fleet;
}

}  // namespace

EmulatorFleet train_fleet_serial(const TrainingSet& train, const FleetConfig& config) {
    if (train.n_members() == 0 || train.grid->empty()) throw DomainError("train_fleet: empty training set");
    const std::size_t n_cells = train.grid->size();
    std::vector<CellFitOutcome> outcomes(n_cells);
    for (std::size_t i = 0; i < n_cells; ++i) outcomes[i] = fit_cell(train, config, i);
    return gather(train, std::move(outcomes));
}

EmulatorFleet train_fleet_parallel(const TrainingSet& train, const FleetConfig& config) {
    if (train.n_members() == 0 || train.grid->empty()) throw DomainError("train_fleet: empty training set");
    const std::size_t n_cells = train.grid->size();
    std::vector<CellFitOutcome> outcomes(n_cells);
    const int workers = std::max(1, config.workers);
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n_cells); ++i)
        outcomes[static_cast<std::size_t>(i)] = fit_cell(train, config, static_cast<std::size_t>(i));
    return gather(train, std::move(outcomes));
}

EmulatorFleet train_fleet(const TrainingSet& train, const FleetConfig& config) {
    return config.workers <= 1 ? train_fleet_serial(train, config) : train_fleet_parallel(train, config);
}

int PredictionTable::row_of_cell(int cell_index) const {
    auto it = std::lower_bound(cell_indices.begin(), cell_indices.end(), cell_index);
    if (it == cell_indices.end() || *it != cell_index) return -1;
    return static_cast<int>(it - cell_indices.begin());
}

namespace {

PredictionTable prepare_table(const EmulatorFleet& fleet, const std::vector<ParameterVector>& tests) {
    if (fleet.fitted_count() == 0) throw DomainError("predict_fleet: fleet has no fitted cells");
    if (tests.empty()) throw DomainError("predict_fleet: no test parameters");
    PredictionTable table;
    table.tests = tests;
    for (std::size_t i = 0; i < fleet.cells.size(); ++i)
        if (fleet.cells[i]) table.cell_indices.push_back(static_cast<int>(i));
    table.mean.resize(static_cast<Eigen::Index>(table.cell_indices.size()),
                      static_cast<Eigen::Index>(tests.size()));
    table.var.resize(table.mean.rows(), table.mean.cols());
    return table;
}

void predict_row(const EmulatorFleet& fleet, PredictionTable& table, std::size_t r) {
    const auto& emu = *fleet.cells[static_cast<std::size_t>(table.cell_indices[r])];
    for (std::size_t k = 0; k < table.tests.size(); ++k) {
        auto [m, v] = emu.predict(table.tests[k]);
        table.mean(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = m;
        table.var(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = v;
    }
}

}  // namespace

PredictionTable predict_fleet_serial(const EmulatorFleet& fleet, const std::vector<ParameterVector>& tests) {
    auto table = prepare_table(fleet, tests);
    for (std::size_t r = 0; r < table.n_cells(); ++r) predict_row(fleet, table, r);
    return table;
}

PredictionTable predict_fleet_parallel(const EmulatorFleet& fleet, const std::vector<ParameterVector>& tests,
                                       int workers) {
    auto table = prepare_table(fleet, tests);
    const int w = std::max(1, workers);
#pragma omp parallel for schedule(dynamic) num_threads(w)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(table.n_cells()); ++r)
        predict_row(fleet, table, static_cast<std::size_t>(r));
    return table;
}

PredictionTable predict_fleet(const EmulatorFleet& fleet, const std::vector<ParameterVector>& tests,
                              int workers) {
    return workers <= 1 ? predict_fleet_serial(fleet, tests) : predict_fleet_parallel(fleet, tests, workers);
}

namespace {
constexpr int kFleetFormatVersion = 1;
constexpr int kPredictionFormatVersion = 1;

json hyper_to_json(const Hyperparameters& h) {
    return json{{"beta0", h.beta0},
                {"amplitude2", h.amplitude2},
                {"length_scales", h.length_scales},
                {"nugget", h.nugget}};
}

Hyperparameters hyper_from_json(const json& j) {
    Hyperparameters h;
    h.beta0 = j.at("beta0").get<double>();
    h.amplitude2 = j.at("amplitude2").get<double>();
    h.length_scales = j.at("length_scales").get<std::vector<double>>();
    h.nugget = j.at("nugget").get<double>();
    return h;
}

std::string cell_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "cell_%06d.json", index);
    return buf;
}

}  // namespace

void save_fleet(const std::string& dir, const EmulatorFleet& fleet, const std::string& config_hash) {
    fs::create_directories(dir);
    json index;
    index["version"] = kFleetFormatVersion;
    index["config_hash"] = config_hash;
    json cells = json::array();
    for (std::size_t i = 0; i < fleet.cells.size(); ++i) {
        if (!fleet.cells[i]) continue;
        const auto& emu = *fleet.cells[i];
        json record;
        record["version"] = kFleetFormatVersion;
        record["cell_index"] = static_cast<int>(i);
        record["sim_point"] = fleet.grid->pair(i).sim.key();
        record["hyper"] = hyper_to_json(emu.hyper());
        record["fit_value"] = emu.fit_value();
        std::ofstream out(fs::path(dir) / cell_file_name(static_cast<int>(i)));
        out << record.dump(2) << "\n";
        cells.push_back({{"index", static_cast<int>(i)},
                         {"sim_point", fleet.grid->pair(i).sim.key()},
                         {"file", cell_file_name(static_cast<int>(i))}});
    }
    index["cells"] = std::move(cells);
    json failures = json::array();
    for (const auto& f : fleet.failures)
        failures.push_back({{"index", f.cell_index},
                            {"sim_point", fleet.grid->pair(static_cast<std::size_t>(f.cell_index)).sim.key()},
                            {"error", f.message}});
    index["failures"] = std::move(failures);
    std::ofstream out(fs::path(dir) / "index.json");
    out << index.dump(2) << "\n";
}

std::string fleet_config_hash(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "index.json");
    if (!in) throw StageDependencyError(dir + "/index.json");
    json index;
    in >> index;
    return index.at("config_hash").get<std::string>();
}

EmulatorFleet load_fleet(const std::string& dir, const TrainingSet& train,
                         const std::string& expect_config_hash) {
    std::ifstream in(fs::path(dir) / "index.json");
    if (!in) throw StageDependencyError(dir + "/index.json");
    json index;
    try {
        in >> index;
    } catch (const json::exception& e) {
        throw SchemaError(dir + "/index.json: invalid JSON: " + e.what());
    }
    if (index.at("version").get<int>() != kFleetFormatVersion)
        throw SchemaError(dir + ": unsupported fleet format version");
    if (!expect_config_hash.empty() && index.at("config_hash").get<std::string>() != expect_config_hash)
        throw ConfigMismatch(dir + ": fleet was trained under a different configuration");

    EmulatorFleet fleet;
    fleet.grid = train.grid;
    fleet.cells.resize(train.grid->size());
    const auto n = train.n_members();
    for (const auto& entry : index.at("cells")) {
        int idx = entry.at("index").get<int>();
        if (idx < 0 || static_cast<std::size_t>(idx) >= fleet.cells.size())
            throw SchemaError(dir + ": cell index out of range in index.json");
        auto sim = SpaceTimePoint::from_key(entry.at("sim_point").get<std::string>());
        if (!(sim == train.grid->pair(static_cast<std::size_t>(idx)).sim))
            throw SchemaError(dir + ": fleet grid does not match the training grid");
        std::ifstream cin(fs::path(dir) / entry.at("file").get<std::string>());
        if (!cin) throw StageDependencyError(dir + "/" + entry.at("file").get<std::string>());
        json record;
        cin >> record;
        auto hyper = hyper_from_json(record.at("hyper"));
        std::vector<double> outputs(n);
        for (std::size_t j = 0; j < n; ++j)
            outputs[j] = train.outputs(static_cast<Eigen::Index>(j), idx);
        CellEmulator emu(hyper, train.inputs, outputs);
        emu.set_fit_value(record.at("fit_value").get<double>());
        fleet.cells[static_cast<std::size_t>(idx)] = std::move(emu);
    }
    for (const auto& f : index.at("failures"))
        fleet.failures.push_back({f.at("index").get<int>(), f.at("error").get<std::string>()});
    return fleet;
}

void save_predictions(const std::string& json_path, const std::string& bin_path,
                      const PredictionTable& table, const ParameterSpace& space,
                      const PredictionTableMeta& meta, const std::string& recorded_bin_name) {
    json header;
    header["version"] = kPredictionFormatVersion;
    header["config_hash"] = meta.config_hash;
    header["seed"] = meta.seed;
    header["n_cells"] = table.n_cells();
    header["n_tests"] = table.n_tests();
    header["cell_indices"] = table.cell_indices;
    header["bin"] = recorded_bin_name.empty() ? fs::path(bin_path).filename().string() : recorded_bin_name;
    header["layout"] = "mean[n_cells*n_tests] var[n_cells*n_tests] row-major float64 little-endian";
    json tests = json::array();
    for (const auto& u : table.tests) tests.push_back(u.values);
    header["tests"] = std::move(tests);
    if (space.size() != 0 && !table.tests.empty() && table.tests[0].size() != space.size())
        throw SchemaError("save_predictions: test dimension disagrees with the parameter space");

    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw SchemaError("cannot write predictions binary: " + bin_path);
    auto write_matrix = [&](const Eigen::MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                double v = m(r, c);
                bin.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
    };
    write_matrix(table.mean);
    write_matrix(table.var);
    bin.close();

    std::ofstream out(json_path);
    if (!out) throw SchemaError("cannot write predictions header: " + json_path);
    out << header.dump(2) << "\n";
}

PredictionTable load_predictions(const std::string& json_path, const ParameterSpace& space,
                                 std::string* config_hash_out) {
    std::ifstream in(json_path);
    if (!in) throw StageDependencyError(json_path);
    json header;
    try {
        in >> header;
    } catch (const json::exception& e) {
        throw SchemaError(json_path + ": invalid JSON: " + e.what());
    }
    if (header.at("version").get<int>() != kPredictionFormatVersion)
        throw SchemaError(json_path + ": unsupported prediction format version");
    if (config_hash_out) *config_hash_out = header.at("config_hash").get<std::string>();

    PredictionTable table;
    table.cell_indices = header.at("cell_indices").get<std::vector<int>>();
    for (const auto& t : header.at("tests")) {
        ParameterVector u;
        u.values = t.get<std::vector<double>>();
        if (u.size() != space.size()) throw SchemaError(json_path + ": test dimension mismatch");
        table.tests.push_back(std::move(u));
    }
    const auto n_cells = static_cast<Eigen::Index>(table.cell_indices.size());
    const auto n_tests = static_cast<Eigen::Index>(table.tests.size());
    if (header.at("n_cells").get<std::size_t>() != table.cell_indices.size() ||
        header.at("n_tests").get<std::size_t>() != table.tests.size())
        throw SchemaError(json_path + ": header dimensions are inconsistent");

    auto bin_path = fs::path(json_path).parent_path() / header.at("bin").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw StageDependencyError(bin_path.string());
    table.mean.resize(n_cells, n_tests);
    table.var.resize(n_cells, n_tests);
    auto read_matrix = [&](Eigen::MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                double v;
                bin.read(reinterpret_cast<char*>(&v), sizeof(v));
                if (!bin) throw SchemaError(bin_path.string() + ": truncated predictions binary");
                m(r, c) = v;
            }
    };
    read_matrix(table.mean);
    read_matrix(table.var);
    return table;
}

}  // namespace emubound
