#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "citynav/env.hpp"

namespace citynav {

// ---------------------------------------------------------------------------
// Compass octants
// ---------------------------------------------------------------------------

inline constexpr const char* kOctantWords[8] = {"north", "northeast", "east", "southeast",
                                                "south", "southwest", "west", "northwest"};
inline constexpr const char* kOctantNames[8] = {"North", "Northeast", "East", "Southeast",
                                                "South", "Southwest", "West", "Northwest"};
inline constexpr const char* kOctantAbbrev[8] = {"N", "NE", "E", "SE", "S", "SW", "W", "NW"};

// Sector k covers [45k - 22.5, 45k + 22.5) degrees.
inline int octant_of(double bearing_deg) {
    const double b = normalize_bearing(bearing_deg);
    return int(std::floor((b + 22.5) / 45.0)) % 8;
}

inline double octant_center(int k) { return 45.0 * ((k % 8 + 8) % 8); }

// Signed difference a - b wrapped to (-180, 180].
inline double signed_angle_diff(double a, double b) {
    double d = std::fmod(a - b, 360.0);
    if (d <= -180.0) d += 360.0;
    if (d > 180.0) d -= 360.0;
    return d;
}

struct CompassLabel {
    bool at_goal = false;
    int octant = 0;                // index into the octant tables
    std::optional<int> qualifier;  // neighboring compass index the bearing leans toward
};

// 45 degree sectors around the 8 compass bearings; a qualifier is attached when
// the bearing sits more than 5 degrees off the sector center.
inline CompassLabel classify_direction(Coord delta) {
    CompassLabel label;
    if (delta.x == 0.0 && delta.y == 0.0) {
        label.at_goal = true;
        return label;
    }
    const double bearing = rel_pos({0.0, 0.0}, delta).bearing_deg;
    label.octant = octant_of(bearing);
    const double dev = signed_angle_diff(bearing, octant_center(label.octant));
    if (dev > 5.0) label.qualifier = (label.octant + 1) % 8;
    else if (dev < -5.0) label.qualifier = (label.octant + 7) % 8;
    return label;
}

// "Southeast (more towards south)" or plain "Northwest"; at-goal has no octant to name.
inline std::string compass_phrase(const CompassLabel& label) {
    if (label.at_goal) return "at the goal";
    std::string s = kOctantNames[label.octant];
    if (label.qualifier) {
        s += " (more towards ";
        s += kOctantWords[*label.qualifier];
        s += ")";
    }
    return s;
}

// ---------------------------------------------------------------------------
// Goal estimation
// ---------------------------------------------------------------------------

struct GoalEstimate {
    enum class Source { perceived, anticipated, fused };
    Coord coord;  // agent frame, origin at the episode start node
    Source source = Source::perceived;
    int step = 0;
};

inline const char* source_name(GoalEstimate::Source s) {
    switch (s) {
        case GoalEstimate::Source::perceived: return "perceived";
        case GoalEstimate::Source::anticipated: return "anticipated";
        default: return "fused";
    }
}

// Planar vector sum agent->landmark plus landmark->goal. Equivalent to the
// law-of-cosines form with the angle taken at the landmark.
inline RelPos triangulate_goal(const RelPos& landmark_rel, const RelPos& goal_rel_lm) {
    const Coord v = rel_to_steps(landmark_rel) + rel_to_steps(goal_rel_lm);
    return rel_pos({0.0, 0.0}, v);
}

inline double round_half_away(double v) {
    return std::round(v); // std::round halves away from zero
}

namespace detail {

// All maximal cliques of the tau-ball graph (Bron-Kerbosch with pivoting;
// histories of identical estimates form complete graphs, which the pivotless
// variant explores exponentially).
inline void maximal_cliques(const std::vector<std::vector<char>>& adj, std::vector<int>& r,
                            std::vector<int> p, std::vector<int> x, std::vector<std::vector<int>>& out) {
    if (p.empty() && x.empty()) {
        out.push_back(r);
        return;
    }
    int pivot = -1, pivot_links = -1;
    for (int u : p) {
        int links = 0;
        for (int w : p)
            if (adj[u][w]) ++links;
        if (links > pivot_links) {
            pivot = u;
            pivot_links = links;
        }
    }
    for (int u : x) {
        int links = 0;
        for (int w : p)
            if (adj[u][w]) ++links;
        if (links > pivot_links) {
            pivot = u;
            pivot_links = links;
        }
    }
    std::vector<int> p_iter;
    for (int v : p)
        if (!adj[pivot][v]) p_iter.push_back(v);
    for (int v : p_iter) {
        std::vector<int> np, nx;
        for (int u : p)
            if (adj[v][u]) np.push_back(u);
        for (int u : x)
            if (adj[v][u]) nx.push_back(u);
        r.push_back(v);
        maximal_cliques(adj, r, std::move(np), std::move(nx), out);
        r.pop_back();
        p.erase(std::find(p.begin(), p.end(), v));
        x.push_back(v);
    }
}

} // namespace detail

// Largest mutually-consistent subset of the history (pairwise step distance
// <= tau), mean, rounded to integer steps. Ties between equally large subsets
// go to the one holding the more recent estimates.
inline Coord fuse_estimates(const std::vector<GoalEstimate>& history, double tau_steps = 10.0) {
    if (history.empty()) throw std::invalid_argument("fuse_estimates: empty history");
    const int n = int(history.size());
    std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            adj[i][j] = (i != j && step_distance(history[i].coord, history[j].coord) <= tau_steps);

    std::vector<std::vector<int>> cliques;
    std::vector<int> r, p(n), x;
    for (int i = 0; i < n; ++i) p[i] = i;
    detail::maximal_cliques(adj, r, std::move(p), std::move(x), cliques);

    // Descending member indices; lexicographically larger = more recent.
    auto recency_key = [](std::vector<int> c) {
        std::sort(c.begin(), c.end(), std::greater<int>());
        return c;
    };
    const std::vector<int>* best = nullptr;
    std::vector<int> best_key;
    for (const auto& c : cliques) {
        auto key = recency_key(c);
        if (!best || c.size() > best->size() || (c.size() == best->size() && key > best_key)) {
            best = &c;
            best_key = std::move(key);
        }
    }
    double sx = 0.0, sy = 0.0;
    for (int i : *best) {
        sx += history[i].coord.x;
        sy += history[i].coord.y;
    }
    const double m = double(best->size());
    return {round_half_away(sx / m), round_half_away(sy / m)};
}

// Dead reckoning: the goal hypothesis stays fixed in the agent frame; only the
// relative direction (last_fused - current) changes as the agent moves.
inline GoalEstimate anticipate_goal(Coord last_fused, Coord /*current*/, int step = 0) {
    return {last_fused, GoalEstimate::Source::anticipated, step};
}

inline Coord goal_delta(Coord goal, Coord current) { return goal - current; }

} // namespace citynav
