// SPDX-License-Identifier: Apache-2.0
#include "emubound/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emubound/csv.hpp"
#include "emubound/error.hpp"

namespace emubound {

std::string SpaceTimePoint::key() const {
    return format_double(lat) + ":" + format_double(lon) + ":" + format_int(time);
}

SpaceTimePoint SpaceTimePoint::from_key(const std::string& key) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream ss(key);
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.size() != 3) throw SchemaError("malformed cell key '" + key + "'");
    SpaceTimePoint p;
    p.lat = parse_double(parts[0], "cell key lat");
    p.lon = parse_double(parts[1], "cell key lon");
    p.time = parse_int(parts[2], "cell key time");
    return p;
}

double normalize_lon(double lon) {
    double y = std::fmod(lon + 180.0, 360.0);
    if (y < 0) y += 360.0;
    return y - 180.0;
}

void RegularGrid::validate() const {
    if (!(lat_step > 0.0) || !(lon_step > 0.0) || time_step <= 0)
        throw DomainError("grid steps must be strictly positive");
    if (lat_count < 1 || lon_count < 1 || time_count < 1) throw DomainError("grid counts must be >= 1");
    double lat_last = lat_at(lat_count - 1);
    if (lat_origin < -90.0 || lat_origin > 90.0 || lat_last < -90.0 || lat_last > 90.0)
        throw DomainError("grid latitude range leaves [-90, 90]");
}

MatchedGrid::MatchedGrid(std::vector<GridPair> pairs, double sim_lat_step, double sim_lon_step,
                         std::int64_t sim_time_step)
    : pairs_(std::move(pairs)),
      sim_lat_step_(sim_lat_step),
      sim_lon_step_(sim_lon_step),
      sim_time_step_(sim_time_step) {
    sim_index_.reserve(pairs_.size());
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
        auto [it, inserted] = sim_index_.emplace(pairs_[i].sim, static_cast<int>(i));
        if (!inserted) throw DomainError("MatchedGrid: duplicate sim cell " + pairs_[i].sim.key());
    }
}

int MatchedGrid::find_sim(const SpaceTimePoint& p) const {
    auto it = sim_index_.find(p);
    return it == sim_index_.end() ? -1 : it->second;
}

namespace {

// Periodic distance between two longitudes in degrees.
double lon_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), 360.0);
    return std::min(d, 360.0 - d);
}

struct AxisMatch {
    int index = -1;
    double distance = 0.0;
    bool within = false;
};

// Nearest grid coordinate along a linear axis; ties toward the smaller value.
AxisMatch nearest_linear(double value, double origin, double step, int count, double half_width) {
    double t = std::clamp((value - origin) / step, -1.0, static_cast<double>(count));
    int base = static_cast<int>(std::lround(t));
    AxisMatch best;
    for (int di = -1; di <= 1; ++di) {
        int idx = std::clamp(base + di, 0, count - 1);
        double coord = origin + idx * step;
        double dist = std::abs(value - coord);
        if (best.index < 0 || dist < best.distance ||
            (dist == best.distance && coord < origin + best.index * step)) {
            best.index = idx;
            best.distance = dist;
        }
    }
    best.within = best.distance <= half_width;
    return best;
}

AxisMatch nearest_time(std::int64_t value, std::int64_t origin, std::int64_t step, int count,
                       double half_width) {
    double t = std::clamp(static_cast<double>(value - origin) / static_cast<double>(step), -1.0,
                          static_cast<double>(count));
    int base = static_cast<int>(std::lround(t));
    AxisMatch best;
    for (int di = -1; di <= 1; ++di) {
        int idx = std::clamp(base + di, 0, count - 1);
        double coord = static_cast<double>(origin + idx * step);
        double dist = std::abs(static_cast<double>(value) - coord);
        if (best.index < 0 || dist < best.distance ||
            (dist == best.distance && idx < best.index)) {
            best.index = idx;
            best.distance = dist;
        }
    }
    best.within = best.distance <= half_width;
    return best;
}

// Nearest longitude under periodic wrap. Candidate indices come from rounding
// the offset of value and value +/- 360; the grid itself may span less than a
// full circle, so indices are clamped and compared by wrapped distance.
AxisMatch nearest_lon(double value, const RegularGrid& sat, double half_width) {
    AxisMatch best;
    auto consider = [&](int idx) {
        if (idx < 0) idx = 0;
        if (idx > sat.lon_count - 1) idx = sat.lon_count - 1;
        double coord = sat.lon_at(idx);
        double dist = lon_distance(value, coord);
        if (best.index < 0 || dist < best.distance ||
            (dist == best.distance && coord < sat.lon_at(best.index))) {
            best.index = idx;
            best.distance = dist;
        }
    };
    for (double shift : {-360.0, 0.0, 360.0}) {
        double t = std::clamp((value + shift - sat.lon_origin) / sat.lon_step, -1.0,
                              static_cast<double>(sat.lon_count));
        int base = static_cast<int>(std::lround(t));
        for (int di = -1; di <= 1; ++di) consider(base + di);
    }
    best.within = best.distance <= half_width;
    return best;
}

}  // namespace

MatchedGrid match_grids(const RegularGrid& sim, const RegularGrid& sat, const MatchTolerance& tol) {
    sim.validate();
    sat.validate();

    const double lat_half = sat.lat_step / 2.0 + tol.degrees;
    const double lon_half = sat.lon_step / 2.0 + tol.degrees;
    const double time_half = static_cast<double>(sat.time_step) / 2.0 + tol.seconds;

    bool lat_any = false, lon_any = false, time_any = false;
    std::vector<GridPair> pairs;
    pairs.reserve(static_cast<std::size_t>(sim.size()));

    for (int kt = 0; kt < sim.time_count; ++kt) {
        auto tm = nearest_time(sim.time_at(kt), sat.time_origin, sat.time_step, sat.time_count, time_half);
        if (tm.within) time_any = true;
        for (int ki = 0; ki < sim.lat_count; ++ki) {
            auto lm = nearest_linear(sim.lat_at(ki), sat.lat_origin, sat.lat_step, sat.lat_count, lat_half);
            if (lm.within) lat_any = true;
            for (int kj = 0; kj < sim.lon_count; ++kj) {
                auto om = nearest_lon(sim.lon_at(kj), sat, lon_half);
                if (om.within) lon_any = true;
                if (!(tm.within && lm.within && om.within)) continue;
                GridPair pr;
                pr.sim = {sim.lat_at(ki), sim.lon_at(kj), sim.time_at(kt)};
                pr.sat = {sat.lat_at(lm.index), sat.lon_at(om.index), sat.time_at(tm.index)};
                pairs.push_back(pr);
            }
        }
    }

    if (pairs.empty()) {
        if (!time_any) throw NoOverlap("time");
        if (!lat_any) throw NoOverlap("lat");
        if (!lon_any) throw NoOverlap("lon");
        throw NoOverlap("all");
    }

    std::sort(pairs.begin(), pairs.end(), [](const GridPair& a, const GridPair& b) { return a.sim < b.sim; });
    return MatchedGrid(std::move(pairs), sim.lat_step, sim.lon_step, sim.time_step);
}

MatchedGrid subset_excluding(const MatchedGrid& m, const std::set<SpaceTimePoint>& excluded) {
    for (const auto& p : excluded)
        if (m.find_sim(p) < 0) throw UnknownPoint("subset_excluding: point " + p.key() + " is not in the grid");
    std::vector<GridPair> kept;
    kept.reserve(m.size());
    for (const auto& pr : m.pairs())
        if (!excluded.count(pr.sim)) kept.push_back(pr);
    return MatchedGrid(std::move(kept), m.sim_lat_step(), m.sim_lon_step(), m.sim_time_step());
}

}  // namespace emubound
