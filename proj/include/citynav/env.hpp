#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "citynav/rng.hpp"

namespace citynav {

using NodeId = std::int64_t;
using json = nlohmann::json;

constexpr double kMetersPerStep = 50.0;

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Geometry primitives
// ---------------------------------------------------------------------------

// Position in step units: x east, y north of an arbitrary per-environment origin.
struct Coord {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Coord& a, const Coord& b) { return a.x == b.x && a.y == b.y; }
    friend Coord operator+(const Coord& a, const Coord& b) { return {a.x + b.x, a.y + b.y}; }
    friend Coord operator-(const Coord& a, const Coord& b) { return {a.x - b.x, a.y - b.y}; }
};

inline double step_distance(Coord a, Coord b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double normalize_bearing(double deg) {
    double b = std::fmod(deg, 360.0);
    if (b < 0.0) b += 360.0;
    if (b >= 360.0) b = 0.0;
    return b;
}

// Bearing clockwise from north plus a distance in meters.
struct RelPos {
    double bearing_deg = 0.0;
    double distance_m = 0.0;
};

inline RelPos rel_pos(Coord from, Coord to) {
    const double dx = to.x - from.x;
    const double dy = to.y - from.y;
    RelPos r;
    r.distance_m = kMetersPerStep * std::hypot(dx, dy);
    if (dx == 0.0 && dy == 0.0) {
        r.bearing_deg = 0.0; // convention for coincident points
    } else {
        r.bearing_deg = normalize_bearing(std::atan2(dx, dy) * 180.0 / M_PI);
    }
    return r;
}

// Displacement of `rel` in step units (east, north).
inline Coord rel_to_steps(const RelPos& rel) {
    const double rad = rel.bearing_deg * M_PI / 180.0;
    const double steps = rel.distance_m / kMetersPerStep;
    return {steps * std::sin(rad), steps * std::cos(rad)};
}

// ---------------------------------------------------------------------------
// Graph model
// ---------------------------------------------------------------------------

struct Node {
    NodeId id = 0;
    Coord coord;
    std::vector<std::string> streetviews; // opaque image references, never opened here
};

struct Landmark {
    NodeId id = 0;
    std::string name;
    Coord coord;
    double visibility_radius_m = 0.0;
};

struct EnvMeta {
    std::string name;
    double step_m = kMetersPerStep;
};

struct VisibleLandmark {
    const Landmark* landmark = nullptr;
    RelPos rel; // ground-truth relation node -> landmark
};

// Undirected road graph with landmark set. Immutable once built; safe to share
// across concurrently running episodes.
class EnvGraph {
public:
    EnvMeta meta;

    void add_node(Node n) {
        if (nodes_.count(n.id)) {
            throw ValidationError("duplicate node id " + std::to_string(n.id));
        }
        order_.push_back(n.id);
        adjacency_[n.id];
        nodes_.emplace(n.id, std::move(n));
    }

    void add_edge(NodeId a, NodeId b) {
        if (a == b) {
            throw ValidationError("self-loop at node " + std::to_string(a));
        }
        check_node(a);
        check_node(b);
        auto& na = adjacency_[a];
        if (std::find(na.begin(), na.end(), b) != na.end()) return; // dedupe
        na.push_back(b);
        adjacency_[b].push_back(a);
    }

    void add_landmark(Landmark lm) {
        if (nodes_.count(lm.id)) {
            throw ValidationError("landmark id " + std::to_string(lm.id) + " collides with a node id");
        }
        if (!(lm.visibility_radius_m > 0.0)) {
            throw ValidationError("landmark " + std::to_string(lm.id) + " (" + lm.name +
                                  ") has non-positive visibility radius");
        }
        landmarks_.push_back(std::move(lm));
    }

    // Call after construction: sorts adjacency for deterministic iteration.
    void finalize() {
        std::sort(order_.begin(), order_.end());
        for (auto& [id, adj] : adjacency_) std::sort(adj.begin(), adj.end());
        std::sort(landmarks_.begin(), landmarks_.end(),
                  [](const Landmark& a, const Landmark& b) { return a.id < b.id; });
    }

    bool has_node(NodeId id) const { return nodes_.count(id) != 0; }

    const Node& node(NodeId id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) throw ValidationError("unknown node id " + std::to_string(id));
        return it->second;
    }

    const std::vector<NodeId>& neighbors(NodeId id) const {
        auto it = adjacency_.find(id);
        if (it == adjacency_.end()) throw ValidationError("unknown node id " + std::to_string(id));
        return it->second;
    }

    std::size_t degree(NodeId id) const { return neighbors(id).size(); }

    const std::vector<NodeId>& node_ids() const { return order_; }
    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<Landmark>& landmarks() const { return landmarks_; }

    const Landmark* find_landmark(NodeId id) const {
        for (const auto& lm : landmarks_)
            if (lm.id == id) return &lm;
        return nullptr;
    }

    // BFS edge-count distance; nullopt when unreachable.
    std::optional<int> shortest_path_len(NodeId a, NodeId b) const {
        check_node(a);
        check_node(b);
        if (a == b) return 0;
        std::unordered_map<NodeId, int> dist;
        dist[a] = 0;
        std::deque<NodeId> queue{a};
        while (!queue.empty()) {
            NodeId v = queue.front();
            queue.pop_front();
            const int d = dist[v];
            for (NodeId w : neighbors(v)) {
                if (dist.count(w)) continue;
                if (w == b) return d + 1;
                dist[w] = d + 1;
                queue.push_back(w);
            }
        }
        return std::nullopt;
    }

    // BFS distances from a source to every reachable node.
    std::unordered_map<NodeId, int> bfs_distances(NodeId a) const {
        check_node(a);
        std::unordered_map<NodeId, int> dist;
        dist[a] = 0;
        std::deque<NodeId> queue{a};
        while (!queue.empty()) {
            NodeId v = queue.front();
            queue.pop_front();
            for (NodeId w : neighbors(v)) {
                if (dist.count(w)) continue;
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
        return dist;
    }

    // Landmarks within their visibility radius of the node, with exact relations.
    std::vector<VisibleLandmark> visible_landmarks(NodeId id) const {
        const Node& n = node(id);
        std::vector<VisibleLandmark> out;
        for (const auto& lm : landmarks_) {
            RelPos r = rel_pos(n.coord, lm.coord);
            if (r.distance_m <= lm.visibility_radius_m) out.push_back({&lm, r});
        }
        return out;
    }

    bool sees_landmark(NodeId id) const {
        const Node& n = node(id);
        for (const auto& lm : landmarks_) {
            if (kMetersPerStep * step_distance(n.coord, lm.coord) <= lm.visibility_radius_m) return true;
        }
        return false;
    }

private:
    void check_node(NodeId id) const {
        if (!nodes_.count(id)) throw ValidationError("unknown node id " + std::to_string(id));
    }

    std::unordered_map<NodeId, Node> nodes_;
    std::unordered_map<NodeId, std::vector<NodeId>> adjacency_;
    std::vector<Landmark> landmarks_;
    std::vector<NodeId> order_;
};

// Structural invariant check for hand-built graphs; throws on the first violation.
inline void validate_env(const EnvGraph& env) {
    for (NodeId id : env.node_ids()) {
        for (NodeId nb : env.neighbors(id)) {
            if (nb == id) throw ValidationError("self-loop at node " + std::to_string(id));
            if (!env.has_node(nb)) {
                throw ValidationError("dangling node id " + std::to_string(nb) + " in adjacency of " +
                                      std::to_string(id));
            }
            const auto& back = env.neighbors(nb);
            if (std::find(back.begin(), back.end(), id) == back.end()) {
                throw ValidationError("asymmetric edge " + std::to_string(id) + " -> " + std::to_string(nb));
            }
        }
        const Node& n = env.node(id);
        if (!std::isfinite(n.coord.x) || !std::isfinite(n.coord.y)) {
            throw ValidationError("non-finite coordinate at node " + std::to_string(id));
        }
    }
    for (const auto& lm : env.landmarks()) {
        if (!(lm.visibility_radius_m > 0.0)) {
            throw ValidationError("landmark " + std::to_string(lm.id) + " has non-positive visibility radius");
        }
        if (env.has_node(lm.id)) {
            throw ValidationError("landmark id " + std::to_string(lm.id) + " collides with a node id");
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization (environment file, JSON)
// ---------------------------------------------------------------------------

namespace detail {

inline json coord_number(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) return json(static_cast<std::int64_t>(v));
    return json(v);
}

} // namespace detail

inline std::string serialize_env(const EnvGraph& env) {
    json j;
    j["meta"] = {{"name", env.meta.name}, {"step_m", detail::coord_number(env.meta.step_m)}};
    json nodes = json::array();
    for (NodeId id : env.node_ids()) {
        const Node& n = env.node(id);
        json jn{{"id", n.id}, {"x", detail::coord_number(n.coord.x)}, {"y", detail::coord_number(n.coord.y)}};
        jn["streetviews"] = n.streetviews;
        nodes.push_back(std::move(jn));
    }
    j["nodes"] = std::move(nodes);
    json edges = json::array();
    for (NodeId id : env.node_ids()) {
        for (NodeId nb : env.neighbors(id)) {
            if (id < nb) edges.push_back(json::array({id, nb})); // once per undirected pair
        }
    }
    j["edges"] = std::move(edges);
    json lms = json::array();
    for (const auto& lm : env.landmarks()) {
        lms.push_back(json{{"id", lm.id},
                           {"name", lm.name},
                           {"x", detail::coord_number(lm.coord.x)},
                           {"y", detail::coord_number(lm.coord.y)},
                           {"visibility_radius_m", detail::coord_number(lm.visibility_radius_m)}});
    }
    j["landmarks"] = std::move(lms);
    return j.dump(2) + "\n";
}

// Parses and validates the environment file format. `warnings`, when given,
// collects non-fatal findings (dropped components, streetview counts).
inline EnvGraph load_env(const std::string& bytes, std::vector<std::string>* warnings = nullptr) {
    json j;
    try {
        j = json::parse(bytes);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
    EnvGraph env;
    try {
        if (j.contains("meta")) {
            env.meta.name = j["meta"].value("name", "");
            env.meta.step_m = j["meta"].value("step_m", kMetersPerStep);
        }
        if (env.meta.step_m != kMetersPerStep) {
            throw ValidationError("unsupported step_m " + std::to_string(env.meta.step_m) +
                                  " (coordinates are defined in 50 m steps)");
        }
        for (const auto& jn : j.value("nodes", json::array())) {
            Node n;
            n.id = jn.at("id").get<NodeId>();
            n.coord = {jn.at("x").get<double>(), jn.at("y").get<double>()};
            if (!std::isfinite(n.coord.x) || !std::isfinite(n.coord.y)) {
                throw ValidationError("non-finite coordinate at node " + std::to_string(n.id));
            }
            if (jn.contains("streetviews")) n.streetviews = jn["streetviews"].get<std::vector<std::string>>();
            env.add_node(std::move(n));
        }
        for (const auto& je : j.value("edges", json::array())) {
            if (!je.is_array() || je.size() != 2) throw ValidationError("edge entry is not a pair: " + je.dump());
            const NodeId a = je[0].get<NodeId>();
            const NodeId b = je[1].get<NodeId>();
            if (!env.has_node(a)) throw ValidationError("dangling node id " + std::to_string(a) + " in edge " + je.dump());
            if (!env.has_node(b)) throw ValidationError("dangling node id " + std::to_string(b) + " in edge " + je.dump());
            env.add_edge(a, b); // symmetrized here
        }
        for (const auto& jl : j.value("landmarks", json::array())) {
            Landmark lm;
            lm.id = jl.at("id").get<NodeId>();
            lm.name = jl.value("name", "");
            lm.coord = {jl.at("x").get<double>(), jl.at("y").get<double>()};
            lm.visibility_radius_m = jl.at("visibility_radius_m").get<double>();
            env.add_landmark(std::move(lm));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed environment file: ") + e.what());
    }
    env.finalize();
    if (warnings) {
        for (NodeId id : env.node_ids()) {
            const Node& n = env.node(id);
            if (!n.streetviews.empty() && n.streetviews.size() > env.degree(id)) {
                warnings->push_back("node " + std::to_string(id) + " lists " +
                                    std::to_string(n.streetviews.size()) + " streetviews but has degree " +
                                    std::to_string(env.degree(id)));
            }
        }
    }
    validate_env(env);
    return env;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

enum class SyntheticKind { grid, radial };

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::grid;
    int width = 10;   // grid: columns; radial: spokes
    int height = 10;  // grid: rows; radial: rings
    double blocked_fraction = 0.0;
    int landmark_count = 1;
    double target_visible_fraction = 1.0;
    std::uint64_t seed = 0;
};

namespace detail {

inline void keep_largest_component(std::vector<Node>& nodes, std::vector<std::pair<NodeId, NodeId>>& edges,
                                   std::vector<std::string>* warnings) {
    std::unordered_map<NodeId, std::vector<NodeId>> adj;
    for (const auto& n : nodes) adj[n.id];
    for (auto [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::unordered_set<NodeId> seen;
    std::vector<NodeId> best;
    for (const auto& n : nodes) {
        if (seen.count(n.id)) continue;
        std::vector<NodeId> comp{n.id};
        seen.insert(n.id);
        for (std::size_t i = 0; i < comp.size(); ++i) {
            for (NodeId w : adj[comp[i]]) {
                if (seen.insert(w).second) comp.push_back(w);
            }
        }
        if (comp.size() > best.size()) best = std::move(comp);
    }
    if (best.size() == nodes.size()) return;
    if (warnings) {
        warnings->push_back("dropped " + std::to_string(nodes.size() - best.size()) +
                            " nodes outside the largest connected component");
    }
    std::unordered_set<NodeId> keep(best.begin(), best.end());
    std::erase_if(nodes, [&](const Node& n) { return !keep.count(n.id); });
    std::erase_if(edges, [&](const auto& e) { return !keep.count(e.first) || !keep.count(e.second); });
}

// Smallest radius whose achieved visible fraction lands within +-5 pp of target.
inline double solve_visibility_radius(const std::vector<Node>& nodes, const std::vector<Landmark>& lms,
                                      double target) {
    std::vector<double> min_dist_m;
    min_dist_m.reserve(nodes.size());
    for (const auto& n : nodes) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& lm : lms) best = std::min(best, kMetersPerStep * step_distance(n.coord, lm.coord));
        min_dist_m.push_back(best);
    }
    std::vector<double> sorted = min_dist_m;
    std::sort(sorted.begin(), sorted.end());
    const double n = double(sorted.size());
    double best_radius = 0.0;
    double best_err = std::numeric_limits<double>::infinity();
    auto consider = [&](double radius) {
        if (!(radius > 0.0) || !std::isfinite(radius)) return;
        const auto visible =
            std::upper_bound(sorted.begin(), sorted.end(), radius) - sorted.begin();
        const double err = std::abs(double(visible) / n - target);
        if (err < best_err) {
            best_err = err;
            best_radius = radius;
        }
    };
    consider(sorted.front() * 0.5); // below the closest node: fraction ~0
    for (double d : sorted) consider(d);
    consider(sorted.back() + kMetersPerStep);
    if (best_err > 0.05) {
        throw ValidationError("infeasible target visible fraction " + std::to_string(target) +
                              ": best achievable deviates by " + std::to_string(best_err));
    }
    return best_radius;
}

inline EnvGraph assemble(std::vector<Node> nodes, std::vector<std::pair<NodeId, NodeId>> edges,
                         std::vector<Landmark> lms, std::string name) {
    EnvGraph env;
    env.meta.name = std::move(name);
    std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
    for (auto& n : nodes) env.add_node(std::move(n));
    for (auto [a, b] : edges) env.add_edge(a, b);
    for (auto& lm : lms) env.add_landmark(std::move(lm));
    env.finalize();
    return env;
}

} // namespace detail

inline EnvGraph gen_synthetic(const SyntheticSpec& spec, std::vector<std::string>* warnings = nullptr) {
    if (spec.width < 2 || spec.height < 2) throw ValidationError("synthetic dimensions must be >= 2");
    if (spec.blocked_fraction < 0.0 || spec.blocked_fraction >= 0.5) {
        throw ValidationError("blocked_fraction must be in [0, 0.5)");
    }
    if (spec.landmark_count < 0) throw ValidationError("landmark_count must be >= 0");
    if (spec.landmark_count == 0 && spec.target_visible_fraction > 0.0) {
        throw ValidationError("infeasible target visible fraction: no landmarks");
    }
    Rng rng(mix64(spec.seed, 0xC17Aull));

    std::vector<Node> nodes;
    std::vector<std::pair<NodeId, NodeId>> edges;
    NodeId landmark_base = 0;

    if (spec.kind == SyntheticKind::grid) {
        const int w = spec.width, h = spec.height;
        const int total = w * h;
        landmark_base = total;
        const int blocked = int(spec.blocked_fraction * total);
        std::vector<NodeId> cells(total);
        for (int i = 0; i < total; ++i) cells[i] = i;
        for (int i = total - 1; i > 0; --i) std::swap(cells[i], cells[rng.uniform_int(i + 1)]);
        std::unordered_set<NodeId> blocked_set(cells.begin(), cells.begin() + blocked);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                NodeId id = NodeId(y) * w + x;
                if (blocked_set.count(id)) continue;
                nodes.push_back({id, {double(x), double(y)}, {}});
                if (x + 1 < w && !blocked_set.count(id + 1)) edges.push_back({id, id + 1});
                if (y + 1 < h && !blocked_set.count(id + w)) edges.push_back({id, id + w});
            }
        }
    } else {
        const int spokes = spec.width, rings = spec.height;
        landmark_base = NodeId(1) + NodeId(rings) * spokes;
        nodes.push_back({0, {0.0, 0.0}, {}});
        auto ring_id = [&](int r, int s) { return NodeId(1) + NodeId(r - 1) * spokes + s; };
        for (int r = 1; r <= rings; ++r) {
            for (int s = 0; s < spokes; ++s) {
                const double ang = 2.0 * M_PI * s / spokes;
                nodes.push_back({ring_id(r, s), {r * std::sin(ang), r * std::cos(ang)}, {}});
                edges.push_back({r == 1 ? 0 : ring_id(r - 1, s), ring_id(r, s)});
                if (spokes > 2) edges.push_back({ring_id(r, s), ring_id(r, (s + 1) % spokes)});
            }
        }
        if (spec.blocked_fraction > 0.0) {
            const int blocked = int(spec.blocked_fraction * nodes.size());
            std::vector<std::size_t> idx(nodes.size() - 1);
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i + 1; // keep the center
            for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
            std::unordered_set<NodeId> blocked_set;
            for (int i = 0; i < blocked && i < int(idx.size()); ++i) blocked_set.insert(nodes[idx[i]].id);
            std::erase_if(nodes, [&](const Node& n) { return blocked_set.count(n.id); });
            std::erase_if(edges, [&](const auto& e) { return blocked_set.count(e.first) || blocked_set.count(e.second); });
        }
    }

    detail::keep_largest_component(nodes, edges, warnings);
    if (nodes.empty()) throw ValidationError("synthetic generator produced an empty graph");

    std::vector<Landmark> lms;
    std::unordered_set<std::int64_t> taken;
    for (int i = 0; i < spec.landmark_count; ++i) {
        Coord c;
        for (int attempt = 0;; ++attempt) {
            c = {double(rng.uniform_int(spec.kind == SyntheticKind::grid ? spec.width : 2 * spec.height + 1)),
                 double(rng.uniform_int(spec.kind == SyntheticKind::grid ? spec.height : 2 * spec.height + 1))};
            if (spec.kind == SyntheticKind::radial) c = {c.x - spec.height, c.y - spec.height};
            const std::int64_t key = std::int64_t(c.x) * 1000003 + std::int64_t(c.y);
            if (!taken.count(key) || attempt > 50) {
                taken.insert(key);
                break;
            }
        }
        lms.push_back({landmark_base + i, "Landmark_" + std::to_string(i + 1), c, 1.0});
    }
    if (!lms.empty()) {
        const double radius = detail::solve_visibility_radius(nodes, lms, spec.target_visible_fraction);
        for (auto& lm : lms) lm.visibility_radius_m = radius;
    }

    std::ostringstream name;
    name << (spec.kind == SyntheticKind::grid ? "grid" : "radial") << "-" << spec.width << "x" << spec.height
         << "-seed" << spec.seed;
    return detail::assemble(std::move(nodes), std::move(edges), std::move(lms), name.str());
}

} // namespace citynav
