// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "emubound/hash.hpp"

namespace emubound {

// Latitude-longitude-time cell center. Longitude is kept in [-180, 180).
struct SpaceTimePoint {
    double lat = 0.0;
    double lon = 0.0;
    std::int64_t time = 0;

    bool operator==(const SpaceTimePoint& o) const { return lat == o.lat && lon == o.lon && time == o.time; }
    // Lexicographic (time, lat, lon); this is the pipeline-wide cell order.
    bool operator<(const SpaceTimePoint& o) const {
        if (time != o.time) return time < o.time;
        if (lat != o.lat) return lat < o.lat;
        return lon < o.lon;
    }

    std::string key() const;  // "lat:lon:time", round-trip precision
    static SpaceTimePoint from_key(const std::string& key);
};

struct SpaceTimePointHash {
    std::size_t operator()(const SpaceTimePoint& p) const {
        std::uint64_t h = mix64(double_bits(p.lat), double_bits(p.lon));
        return static_cast<std::size_t>(mix64(h, static_cast<std::uint64_t>(p.time)));
    }
};

// Stable 64-bit id of a cell, used to derive per-cell RNG seeds.
inline std::uint64_t cell_key(const SpaceTimePoint& p) {
    return mix64(mix64(double_bits(p.lat), double_bits(p.lon)), static_cast<std::uint64_t>(p.time));
}

double normalize_lon(double lon);

struct RegularGrid {
    double lat_origin = 0.0;
    double lat_step = 1.0;
    int lat_count = 1;
    double lon_origin = 0.0;
    double lon_step = 1.0;
    int lon_count = 1;
    std::int64_t time_origin = 0;
    std::int64_t time_step = 1;
    int time_count = 1;

    void validate() const;
    std::int64_t size() const {
        return static_cast<std::int64_t>(lat_count) * lon_count * time_count;
    }
    double lat_at(int i) const { return lat_origin + i * lat_step; }
    double lon_at(int j) const { return normalize_lon(lon_origin + j * lon_step); }
    std::int64_t time_at(int k) const { return time_origin + k * time_step; }
};

struct GridPair {
    SpaceTimePoint sim;
    SpaceTimePoint sat;
};

// The sim->sat nearest-neighbor pairing all downstream statistics live on.
// Pairs are in lexicographic (time, lat, lon) order of the sim point and
// that order is fixed for the pipeline's lifetime.
class MatchedGrid {
public:
    MatchedGrid() = default;
    MatchedGrid(std::vector<GridPair> pairs, double sim_lat_step, double sim_lon_step,
                std::int64_t sim_time_step);

    const std::vector<GridPair>& pairs() const { return pairs_; }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }
    const GridPair& pair(std::size_t i) const { return pairs_[i]; }

    // Index of a sim point, or -1.
    int find_sim(const SpaceTimePoint& p) const;

    double sim_lat_step() const { return sim_lat_step_; }
    double sim_lon_step() const { return sim_lon_step_; }
    std::int64_t sim_time_step() const { return sim_time_step_; }

private:
    std::vector<GridPair> pairs_;
    std::unordered_map<SpaceTimePoint, int, SpaceTimePointHash> sim_index_;
    double sim_lat_step_ = 0.0;
    double sim_lon_step_ = 0.0;
    std::int64_t sim_time_step_ = 0;
};

struct MatchTolerance {
    double degrees = 1e-9;
    double seconds = 1.0;
};

// Pair every sim cell with its nearest sat cell (periodic wrap on longitude,
// ties toward the smaller coordinate). Sim cells whose nearest sat neighbor is
// further than half a sat step plus tolerance on any axis are dropped.
MatchedGrid match_grids(const RegularGrid& sim, const RegularGrid& sat, const MatchTolerance& tol = {});

// m minus the pairs whose sim point is in `excluded`, order preserved.
MatchedGrid subset_excluding(const MatchedGrid& m, const std::set<SpaceTimePoint>& excluded);

}  // namespace emubound
