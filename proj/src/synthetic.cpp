// SPDX-License-Identifier: Apache-2.0
#include "emubound/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "emubound/error.hpp"
#include "emubound/rng.hpp"

namespace emubound {

using nlohmann::json;

namespace {

constexpr int kRidges = 3;

struct CellModel {
    double base = 0.0;
    bool monotone = false;
    double slope = 0.0;  // additive coefficient on normalized coordinate 0
    // Ridge r: weight * exp(-((dir . t - center) / width)^2)
    std::vector<std::vector<double>> dir;
    std::vector<double> center, width, weight;
};

CellModel cell_model(const SyntheticSpec& spec, const SpaceTimePoint& x) {
    const std::size_t p = spec.space.size();
    std::uint64_t h = mix64(spec.model_seed, cell_key(x));
    CellModel m;
    m.monotone = (h & 1) == 0;
    Rng rng(h);
    m.base = 0.1 + 0.4 * rng.uniform();
    m.slope = m.monotone ? 0.1 + 0.3 * rng.uniform() : 0.0;
    // On monotone cells coordinate 0 enters only through the linear term, so
    // the response in it is increasing by construction.
    std::size_t first_coord = (m.monotone && p > 1) ? 1 : 0;
    bool use_ridges = !(m.monotone && p == 1);
    if (use_ridges) {
        m.dir.resize(kRidges);
        for (int r = 0; r < kRidges; ++r) {
            auto& d = m.dir[static_cast<std::size_t>(r)];
            d.assign(p, 0.0);
            double norm2 = 0.0;
            for (std::size_t i = first_coord; i < p; ++i) {
                d[i] = rng.uniform(-1.0, 1.0);
                norm2 += d[i] * d[i];
            }
            if (norm2 <= 0.0) {
                d[first_coord] = 1.0;
                norm2 = 1.0;
            }
            double inv = 1.0 / std::sqrt(norm2);
            for (auto& v : d) v *= inv;
            m.center.push_back(rng.uniform(-0.5, 1.5));
            m.width.push_back(rng.uniform(0.4, 1.0));
            m.weight.push_back(rng.uniform(0.05, 0.35));
        }
    }
    return m;
}

std::vector<double> normalize(const SyntheticSpec& spec, const ParameterVector& u) {
    const std::size_t p = spec.space.size();
    std::vector<double> t(p);
    for (std::size_t i = 0; i < p; ++i) {
        const auto& d = spec.space.dims[i];
        t[i] = (u.values[i] - d.min) / (d.max - d.min);
    }
    return t;
}

}  // namespace

bool forward_is_monotone_cell(const SyntheticSpec& spec, const SpaceTimePoint& x) {
    return (mix64(spec.model_seed, cell_key(x)) & 1) == 0;
}

double forward(const SyntheticSpec& spec, const SpaceTimePoint& x, const ParameterVector& u) {
    if (u.size() != spec.space.size()) throw DomainError("forward: parameter dimension mismatch");
    if (spec.family != "ridge") throw DomainError("forward: unknown forward-model family '" + spec.family + "'");
    auto m = cell_model(spec, x);
    auto t = normalize(spec, u);
    double f = m.base + m.slope * t[0];
    for (std::size_t r = 0; r < m.dir.size(); ++r) {
        double proj = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) proj += m.dir[r][i] * t[i];
        double a = (proj - m.center[r]) / m.width[r];
        f += m.weight[r] * std::exp(-a * a);
    }
    return f;
}

std::vector<double> forward_grad(const SyntheticSpec& spec, const SpaceTimePoint& x,
                                 const ParameterVector& u) {
    if (u.size() != spec.space.size()) throw DomainError("forward_grad: parameter dimension mismatch");
    auto m = cell_model(spec, x);
    auto t = normalize(spec, u);
    const std::size_t p = t.size();
    std::vector<double> g(p, 0.0);
    g[0] = m.slope;
    for (std::size_t r = 0; r < m.dir.size(); ++r) {
        double proj = 0.0;
        for (std::size_t i = 0; i < p; ++i) proj += m.dir[r][i] * t[i];
        double a = (proj - m.center[r]) / m.width[r];
        double common = m.weight[r] * std::exp(-a * a) * (-2.0 * a / m.width[r]);
        for (std::size_t i = 0; i < p; ++i) g[i] += common * m.dir[r][i];
    }
    for (std::size_t i = 0; i < p; ++i) {
        const auto& d = spec.space.dims[i];
        g[i] /= (d.max - d.min);  // chain rule through normalization
    }
    return g;
}

SyntheticData generate(const SyntheticSpec& spec) {
    spec.space.validate();
    validate_in_space(spec.space, spec.u_star);
    if (spec.n_members < 2) throw DomainError("generate: n_members must be >= 2");
    if (spec.delta2 < 0.0 || spec.meas_var < 0.0) throw DomainError("generate: variances must be nonnegative");
    if (!(spec.missing_fraction >= 0.0 && spec.missing_fraction < 1.0))
        throw DomainError("generate: missing_fraction must be in [0, 1)");

    const RegularGrid& sat = spec.has_sat_grid() ? spec.sat_grid : spec.sim_grid;
    auto grid = std::make_shared<const MatchedGrid>(match_grids(spec.sim_grid, sat));
    const std::size_t n_pairs = grid->size();
    const std::size_t p = spec.space.size();

    SyntheticData data;
    data.grid = grid;
    data.truth.u_star = spec.u_star;
    data.truth.delta2 = spec.delta2;
    data.truth.seed = spec.seed;
    data.truth.model_seed = spec.model_seed;
    data.truth.monotone_axis = 0;

    // Ensemble design: i.i.d. uniform over the box.
    Rng design(derive_seed(spec.seed, "ensemble"));
    data.train.grid = grid;
    data.train.inputs.resize(static_cast<std::size_t>(spec.n_members));
    for (auto& u : data.train.inputs) {
        u.values.resize(p);
        for (std::size_t i = 0; i < p; ++i)
            u.values[i] = design.uniform(spec.space.dims[i].min, spec.space.dims[i].max);
    }
    data.train.outputs.resize(spec.n_members, static_cast<Eigen::Index>(n_pairs));
    for (std::size_t j = 0; j < data.train.inputs.size(); ++j)
        for (std::size_t i = 0; i < n_pairs; ++i)
            data.train.outputs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                forward(spec, grid->pair(i).sim, data.train.inputs[j]);

    // Observations per distinct sat point: z = zeta + noise, zeta taken from the
    // first pair referencing the point (exact under unique pairings).
    struct SatObs {
        bool missing;
        double z;
        double var;
    };
    std::unordered_map<SpaceTimePoint, SatObs, SpaceTimePointHash> by_sat;
    Rng noise(derive_seed(spec.seed, "obs"));
    Rng missing_rng(derive_seed(spec.seed, "missing"));

    data.obs.grid = grid;
    data.obs.status.resize(n_pairs, ObsStatus::Absent);
    data.obs.z.resize(n_pairs, 0.0);
    data.obs.meas_var.resize(n_pairs, 0.0);

    for (std::size_t i = 0; i < n_pairs; ++i) {
        const auto& pr = grid->pair(i);
        auto it = by_sat.find(pr.sat);
        if (it == by_sat.end()) {
            SatObs o{};
            o.missing = spec.missing_fraction > 0.0 && missing_rng.uniform() < spec.missing_fraction;
            o.var = spec.meas_var;
            double zeta = forward(spec, pr.sim, spec.u_star);
            o.z = zeta + std::sqrt(spec.meas_var + spec.delta2) * noise.normal();
            it = by_sat.emplace(pr.sat, o).first;
            if (o.missing) data.truth.missing_cells.push_back(pr.sim);
        }
        if (it->second.missing) {
            data.obs.status[i] = ObsStatus::Missing;
        } else {
            data.obs.status[i] = ObsStatus::Present;
            data.obs.z[i] = it->second.z;
            data.obs.meas_var[i] = it->second.var;
        }
    }

    // Planted outliers: shift the observation at hash-selected present cells.
    if (spec.planted_outliers > 0) {
        std::vector<std::size_t> order(n_pairs);
        for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
        std::uint64_t shuffle_seed = derive_seed(spec.seed, "outliers");
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return mix64(shuffle_seed, cell_key(grid->pair(a).sim)) <
                   mix64(shuffle_seed, cell_key(grid->pair(b).sim));
        });
        int planted = 0;
        for (std::size_t i : order) {
            if (planted >= spec.planted_outliers) break;
            if (data.obs.status[i] != ObsStatus::Present) continue;
            data.obs.z[i] += spec.outlier_shift_sigmas * std::sqrt(spec.meas_var + spec.delta2);
            data.truth.outlier_cells.push_back(grid->pair(i).sim);
            ++planted;
        }
        std::sort(data.truth.outlier_cells.begin(), data.truth.outlier_cells.end());
    }

    return data;
}

void save_truth(const std::string& path, const TruthRecord& truth, const std::string& config_hash) {
    json j;
    j["config_hash"] = config_hash;
    j["u_star"] = truth.u_star.values;
    j["delta2"] = truth.delta2;
    j["seed"] = truth.seed;
    j["model_seed"] = truth.model_seed;
    j["monotone_axis"] = truth.monotone_axis;
    json outliers = json::array();
    for (const auto& c : truth.outlier_cells) outliers.push_back(c.key());
    j["outlier_cells"] = std::move(outliers);
    json missing = json::array();
    for (const auto& c : truth.missing_cells) missing.push_back(c.key());
    j["missing_cells"] = std::move(missing);
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write truth record: " + path);
    out << j.dump(2) << "\n";
}

TruthRecord load_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageDependencyError(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": invalid JSON: " + e.what());
    }
    TruthRecord truth;
    truth.u_star.values = j.at("u_star").get<std::vector<double>>();
    truth.delta2 = j.at("delta2").get<double>();
    truth.seed = j.at("seed").get<std::uint64_t>();
    truth.model_seed = j.at("model_seed").get<std::uint64_t>();
    truth.monotone_axis = j.at("monotone_axis").get<int>();
    for (const auto& k : j.at("outlier_cells")) truth.outlier_cells.push_back(SpaceTimePoint::from_key(k));
    for (const auto& k : j.at("missing_cells")) truth.missing_cells.push_back(SpaceTimePoint::from_key(k));
    return truth;
}

}  // namespace emubound
