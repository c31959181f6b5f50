// SPDX-License-Identifier: Apache-2.0
#include "emubound/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "emubound/csv.hpp"
#include "emubound/error.hpp"
#include "emubound/rng.hpp"

namespace emubound {

using nlohmann::json;

void ParameterSpace::validate() const {
    std::set<std::string> names;
    for (const auto& d : dims) {
        if (!(d.min < d.max))
            throw SchemaError("parameter '" + d.name + "': min must be strictly less than max");
        if (!names.insert(d.name).second) throw SchemaError("duplicate parameter name '" + d.name + "'");
    }
}

void validate_in_space(const ParameterSpace& space, const ParameterVector& u) {
    if (u.size() != space.size()) throw SchemaError("parameter vector dimension mismatch");
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& d = space.dims[i];
        if (!(u[i] >= d.min && u[i] <= d.max)) throw RangeViolation(d.name, u[i]);
    }
}

std::size_t ObservationSet::present_count() const {
    return static_cast<std::size_t>(std::count(status.begin(), status.end(), ObsStatus::Present));
}

std::vector<ParameterVector> sample_test_parameters(const ParameterSpace& space, int count,
                                                    std::uint64_t seed, SamplingStrategy strategy) {
    if (count < 1) throw DomainError("sample_test_parameters: count must be >= 1");
    space.validate();
    const std::size_t p = space.size();
    std::vector<ParameterVector> out(static_cast<std::size_t>(count));
    Rng rng(seed);
    if (strategy == SamplingStrategy::Uniform) {
        for (auto& u : out) {
            u.values.resize(p);
            for (std::size_t i = 0; i < p; ++i)
                u.values[i] = rng.uniform(space.dims[i].min, space.dims[i].max);
        }
    } else {
        // Latin hypercube: one stratum per sample and coordinate, shuffled per coordinate.
        for (auto& u : out) u.values.resize(p);
        std::vector<int> perm(static_cast<std::size_t>(count));
        for (std::size_t i = 0; i < p; ++i) {
            for (int k = 0; k < count; ++k) perm[static_cast<std::size_t>(k)] = k;
            for (int k = count - 1; k > 0; --k)
                std::swap(perm[static_cast<std::size_t>(k)],
                          perm[rng.below(static_cast<std::uint64_t>(k + 1))]);
            const auto& d = space.dims[i];
            double width = (d.max - d.min) / count;
            for (int k = 0; k < count; ++k) {
                double cell = static_cast<double>(perm[static_cast<std::size_t>(k)]);
                out[static_cast<std::size_t>(k)].values[i] = d.min + width * (cell + rng.uniform());
            }
        }
    }
    return out;
}

ParameterSpace load_parameter_space(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open parameter space manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": invalid JSON: " + e.what());
    }
    if (!j.is_array()) throw SchemaError(path + ": expected a JSON array of {name, min, max}");
    ParameterSpace space;
    for (const auto& item : j) {
        ParameterSpace::Dim d;
        try {
            d.name = item.at("name").get<std::string>();
            d.min = item.at("min").get<double>();
            d.max = item.at("max").get<double>();
        } catch (const json::exception& e) {
            throw SchemaError(path + ": bad parameter entry: " + e.what());
        }
        space.dims.push_back(std::move(d));
    }
    space.validate();
    return space;
}

void save_parameter_space(const std::string& path, const ParameterSpace& space) {
    json j = json::array();
    for (const auto& d : space.dims) j.push_back({{"name", d.name}, {"min", d.min}, {"max", d.max}});
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

namespace {
constexpr const char* kParamPrefix = "param:";
constexpr const char* kCellPrefix = "cell:";
}  // namespace

TrainingSet load_ensemble(const std::string& path, const ParameterSpace& space,
                          std::shared_ptr<const MatchedGrid> grid) {
    space.validate();
    auto table = read_csv(path);
    if (table.header.empty() || table.header[0] != "member")
        throw SchemaError(path + ": first column must be 'member'");

    const std::size_t p = space.size();
    std::vector<int> param_cols(p, -1);
    std::unordered_map<SpaceTimePoint, int, SpaceTimePointHash> cell_cols;
    for (std::size_t c = 1; c < table.header.size(); ++c) {
        const auto& name = table.header[c];
        if (name.rfind(kParamPrefix, 0) == 0) {
            std::string pname = name.substr(6);
            bool found = false;
            for (std::size_t i = 0; i < p; ++i) {
                if (space.dims[i].name == pname) {
                    param_cols[i] = static_cast<int>(c);
                    found = true;
                    break;
                }
            }
            if (!found) throw SchemaError(path + ": unknown parameter column '" + name + "'");
        } else if (name.rfind(kCellPrefix, 0) == 0) {
            cell_cols.emplace(SpaceTimePoint::from_key(name.substr(5)), static_cast<int>(c));
        } else {
            throw SchemaError(path + ": unrecognized column '" + name + "'");
        }
    }
    for (std::size_t i = 0; i < p; ++i)
        if (param_cols[i] < 0) throw SchemaError(path + ": missing column 'param:" + space.dims[i].name + "'");

    const std::size_t n_cells = grid->size();
    std::vector<int> grid_cols(n_cells, -1);
    for (std::size_t i = 0; i < n_cells; ++i) {
        auto it = cell_cols.find(grid->pair(i).sim);
        if (it == cell_cols.end())
            throw SchemaError(path + ": missing column 'cell:" + grid->pair(i).sim.key() + "'");
        grid_cols[i] = it->second;
    }

    const std::size_t n = table.rows.size();
    if (n < 2) throw SchemaError(path + ": ensemble must have at least 2 members, found " + std::to_string(n));

    TrainingSet train;
    train.grid = std::move(grid);
    train.inputs.resize(n);
    train.outputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_cells));
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = table.rows[r];
        auto& u = train.inputs[r];
        u.values.resize(p);
        for (std::size_t i = 0; i < p; ++i)
            u.values[i] = parse_double(row[static_cast<std::size_t>(param_cols[i])],
                                       path + " member " + row[0] + " param " + space.dims[i].name);
        validate_in_space(space, u);
        for (std::size_t i = 0; i < n_cells; ++i) {
            double v = parse_double(row[static_cast<std::size_t>(grid_cols[i])],
                                    path + " member " + row[0] + " cell " + train.grid->pair(i).sim.key());
            if (!std::isfinite(v)) throw SchemaError(path + ": non-finite output for member " + row[0]);
            train.outputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = v;
        }
    }
    return train;
}

void save_ensemble(const std::string& path, const ParameterSpace& space, const TrainingSet& train) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write ensemble file: " + path);
    std::vector<std::string> header{"member"};
    for (const auto& d : space.dims) header.push_back(std::string(kParamPrefix) + d.name);
    for (const auto& pr : train.grid->pairs()) header.push_back(std::string(kCellPrefix) + pr.sim.key());
    out << join_csv_row(header) << "\n";
    for (std::size_t r = 0; r < train.n_members(); ++r) {
        std::vector<std::string> row{format_int(static_cast<long long>(r))};
        for (double v : train.inputs[r].values) row.push_back(format_double(v));
        for (std::size_t i = 0; i < train.grid->size(); ++i)
            row.push_back(format_double(train.outputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i))));
        out << join_csv_row(row) << "\n";
    }
}

ObservationSet load_observations(const std::string& path, std::shared_ptr<const MatchedGrid> grid) {
    auto table = read_csv(path);
    int c_lat = table.require_column("lat");
    int c_lon = table.require_column("lon");
    int c_time = table.require_column("time");
    int c_z = table.require_column("z");
    int c_var = table.require_column("meas_var");

    struct Entry {
        bool missing;
        double z;
        double var;
    };
    std::unordered_map<SpaceTimePoint, Entry, SpaceTimePointHash> by_sat;
    by_sat.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        SpaceTimePoint pt;
        pt.lat = parse_double(row[static_cast<std::size_t>(c_lat)], path + " lat");
        pt.lon = parse_double(row[static_cast<std::size_t>(c_lon)], path + " lon");
        pt.time = parse_int(row[static_cast<std::size_t>(c_time)], path + " time");
        const auto& zs = row[static_cast<std::size_t>(c_z)];
        Entry e{};
        if (zs.empty()) {
            e.missing = true;
            e.z = 0.0;
            e.var = 0.0;
        } else {
            e.missing = false;
            e.z = parse_double(zs, path + " z");
            e.var = parse_double(row[static_cast<std::size_t>(c_var)], path + " meas_var at " + pt.key());
            if (!(e.var >= 0.0) || !std::isfinite(e.var))
                throw SchemaError(path + ": negative or non-finite meas_var at " + pt.key());
            if (!std::isfinite(e.z)) throw SchemaError(path + ": non-finite z at " + pt.key());
        }
        by_sat[pt] = e;
    }

    ObservationSet obs;
    obs.grid = std::move(grid);
    const std::size_t n = obs.grid->size();
    obs.status.resize(n, ObsStatus::Absent);
    obs.z.resize(n, 0.0);
    obs.meas_var.resize(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = by_sat.find(obs.grid->pair(i).sat);
        if (it == by_sat.end()) continue;
        if (it->second.missing) {
            obs.status[i] = ObsStatus::Missing;
        } else {
            obs.status[i] = ObsStatus::Present;
            obs.z[i] = it->second.z;
            obs.meas_var[i] = it->second.var;
        }
    }
    return obs;
}

void save_observations(const std::string& path, const ObservationSet& obs) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write observation file: " + path);
    out << "lat,lon,time,z,meas_var\n";
    // One row per distinct sat point, first pair wins (duplicates share the retrieval).
    std::set<SpaceTimePoint> written;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (obs.status[i] == ObsStatus::Absent) continue;
        const auto& sat = obs.grid->pair(i).sat;
        if (!written.insert(sat).second) continue;
        std::vector<std::string> row{format_double(sat.lat), format_double(sat.lon), format_int(sat.time)};
        if (obs.status[i] == ObsStatus::Missing) {
            row.emplace_back();
            row.emplace_back();
        } else {
            row.push_back(format_double(obs.z[i]));
            row.push_back(format_double(obs.meas_var[i]));
        }
        out << join_csv_row(row) << "\n";
    }
}

std::vector<std::string> test_parameter_header(const ParameterSpace& space) {
    std::vector<std::string> header{"k"};
    for (const auto& d : space.dims) header.push_back(std::string(kParamPrefix) + d.name);
    return header;
}

void save_test_parameters(const std::string& path, const ParameterSpace& space,
                          const std::vector<ParameterVector>& tests) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write test parameter file: " + path);
    out << join_csv_row(test_parameter_header(space)) << "\n";
    for (std::size_t k = 0; k < tests.size(); ++k) {
        std::vector<std::string> row{format_int(static_cast<long long>(k))};
        for (double v : tests[k].values) row.push_back(format_double(v));
        out << join_csv_row(row) << "\n";
    }
}

std::vector<ParameterVector> load_test_parameters(const std::string& path, const ParameterSpace& space) {
    auto table = read_csv(path);
    auto expected = test_parameter_header(space);
    if (table.header != expected) throw SchemaError(path + ": unexpected test-parameter header");
    std::vector<ParameterVector> tests(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        tests[r].values.resize(space.size());
        for (std::size_t i = 0; i < space.size(); ++i)
            tests[r].values[i] = parse_double(table.rows[r][i + 1], path + " test row");
        validate_in_space(space, tests[r]);
    }
    return tests;
}

}  // namespace emubound
