#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "citynav/env.hpp"
#include "citynav/spatial.hpp"

namespace citynav {

// ---------------------------------------------------------------------------
// Task model
// ---------------------------------------------------------------------------

struct R1Entry {
    NodeId lm = 0;
    RelPos rel; // goal with respect to the landmark
};

struct R2Entry {
    NodeId a = 0;
    NodeId b = 0;
    RelPos rel; // b with respect to a, a < b
};

struct GoalDescription {
    std::vector<R1Entry> r1;
    std::vector<R2Entry> r2;
};

struct Task {
    std::string task_id;
    NodeId start = 0;
    NodeId goal = 0;
    GoalDescription description;
    int min_steps = 0;
    int budget = 0;
};

inline int budget_for(int min_steps) { return (5 * min_steps + 1) / 2; } // ceil(2.5 l)

// ---------------------------------------------------------------------------
// Goal descriptions
// ---------------------------------------------------------------------------

inline GoalDescription describe_goal(const EnvGraph& env, NodeId goal) {
    GoalDescription d;
    const Coord g = env.node(goal).coord;
    for (const auto& vl : env.visible_landmarks(goal)) {
        d.r1.push_back({vl.landmark->id, rel_pos(vl.landmark->coord, g)});
    }
    if (d.r1.empty()) throw ValidationError("goal node " + std::to_string(goal) + " sees no landmark");
    const auto& lms = env.landmarks();
    for (std::size_t i = 0; i < lms.size(); ++i) {
        for (std::size_t j = i + 1; j < lms.size(); ++j) {
            d.r2.push_back({lms[i].id, lms[j].id, rel_pos(lms[i].coord, lms[j].coord)});
        }
    }
    return d;
}

inline long long round_to_10m(double meters) { return llround(meters / 10.0) * 10; }

template <typename NameOf>
inline std::string render_description(const GoalDescription& d, NameOf&& name_of) {
    std::ostringstream out;
    bool first = true;
    for (const auto& e : d.r1) {
        if (!first) out << ". ";
        first = false;
        out << "the destination is approximately " << round_to_10m(e.rel.distance_m) << " meters "
            << kOctantWords[octant_of(e.rel.bearing_deg)] << " from the " << name_of(e.lm);
    }
    for (const auto& e : d.r2) {
        if (!first) out << ". ";
        first = false;
        out << "the " << name_of(e.b) << " is approximately " << round_to_10m(e.rel.distance_m) << " meters "
            << kOctantWords[octant_of(e.rel.bearing_deg)] << " from the " << name_of(e.a);
    }
    return out.str();
}

inline std::string render_description(const GoalDescription& d, const EnvGraph& env) {
    return render_description(d, [&](NodeId id) {
        const Landmark* lm = env.find_landmark(id);
        if (!lm) throw ValidationError("unknown landmark id " + std::to_string(id));
        return lm->name;
    });
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

constexpr int kTaskRetryCap = 200;

// Draws target lengths from round(Normal(mu, sigma)) clamped to >= 5, then
// realizes each with a random start and an exact-distance landmark-visible
// goal. After the retry cap the nearest achievable distance is accepted;
// min_steps always records the realized BFS distance.
inline std::vector<Task> sample_tasks(const EnvGraph& env, int n, double mu, double sigma,
                                      std::uint64_t seed) {
    if (n < 1) throw ValidationError("task count must be >= 1");
    if (!(mu > 0.0)) throw ValidationError("mu must be > 0");
    if (env.landmarks().empty()) throw ValidationError("environment has no landmarks");

    const auto& ids = env.node_ids();
    std::vector<Task> tasks;
    tasks.reserve(n);
    Rng base(mix64(seed, 0x7A5Cull));
    for (int i = 0; i < n; ++i) {
        Rng rng = base.fork(std::uint64_t(i));
        const int target = std::max(5, int(llround(rng.normal(mu, sigma))));

        NodeId start = 0, goal = 0;
        int realized = -1;
        for (int attempt = 0; attempt < kTaskRetryCap && realized < 0; ++attempt) {
            start = ids[rng.uniform_int(ids.size())];
            const auto dist = env.bfs_distances(start);
            std::vector<NodeId> candidates;
            for (const auto& [id, d] : dist) {
                if (d == target && env.sees_landmark(id)) candidates.push_back(id);
            }
            if (candidates.empty()) continue;
            std::sort(candidates.begin(), candidates.end());
            goal = candidates[rng.uniform_int(candidates.size())];
            realized = target;
        }
        if (realized < 0) {
            // Nearest achievable distance, scanning starts in id order if the
            // sampled one reaches no landmark-visible node at all.
            std::vector<NodeId> start_order{ids[rng.uniform_int(ids.size())]};
            start_order.insert(start_order.end(), ids.begin(), ids.end());
            for (NodeId s : start_order) {
                const auto dist = env.bfs_distances(s);
                int best_err = -1;
                for (const auto& [id, d] : dist) {
                    if (d < 1 || !env.sees_landmark(id)) continue;
                    const int err = std::abs(d - target);
                    if (best_err < 0 || err < best_err || (err == best_err && id < goal)) {
                        best_err = err;
                        goal = id;
                        realized = d;
                    }
                }
                if (realized >= 0) {
                    start = s;
                    break;
                }
            }
            if (realized < 0) throw ValidationError("no landmark-visible goal reachable from any start");
        }

        Task t;
        std::ostringstream id;
        id << "t" << std::setw(4) << std::setfill('0') << i;
        t.task_id = id.str();
        t.start = start;
        t.goal = goal;
        t.min_steps = realized;
        t.budget = budget_for(realized);
        t.description = describe_goal(env, goal);
        tasks.push_back(std::move(t));
    }
    return tasks;
}

// ---------------------------------------------------------------------------
// Task file (JSONL)
// ---------------------------------------------------------------------------

inline json task_to_json(const Task& t) {
    json r1 = json::array();
    for (const auto& e : t.description.r1) {
        r1.push_back({{"lm", e.lm}, {"bearing_deg", e.rel.bearing_deg}, {"distance_m", e.rel.distance_m}});
    }
    json r2 = json::array();
    for (const auto& e : t.description.r2) {
        r2.push_back({{"a", e.a},
                      {"b", e.b},
                      {"bearing_deg", e.rel.bearing_deg},
                      {"distance_m", e.rel.distance_m}});
    }
    return json{{"task_id", t.task_id}, {"start", t.start},   {"goal", t.goal},
                {"min_steps", t.min_steps}, {"budget", t.budget}, {"r1", std::move(r1)},
                {"r2", std::move(r2)}};
}

inline Task task_from_json(const json& j) {
    Task t;
    try {
        t.task_id = j.at("task_id").get<std::string>();
        t.start = j.at("start").get<NodeId>();
        t.goal = j.at("goal").get<NodeId>();
        t.min_steps = j.at("min_steps").get<int>();
        t.budget = j.at("budget").get<int>();
        for (const auto& e : j.value("r1", json::array())) {
            t.description.r1.push_back(
                {e.at("lm").get<NodeId>(), {e.at("bearing_deg").get<double>(), e.at("distance_m").get<double>()}});
        }
        for (const auto& e : j.value("r2", json::array())) {
            t.description.r2.push_back({e.at("a").get<NodeId>(),
                                        e.at("b").get<NodeId>(),
                                        {e.at("bearing_deg").get<double>(), e.at("distance_m").get<double>()}});
        }
    } catch (const json::exception& ex) {
        throw ValidationError(std::string("malformed task record: ") + ex.what());
    }
    if (t.min_steps < 1) throw ValidationError("task " + t.task_id + " has min_steps < 1");
    if (t.start == t.goal) throw ValidationError("task " + t.task_id + " has start == goal");
    if (t.description.r1.empty()) throw ValidationError("task " + t.task_id + " has empty r1");
    return t;
}

inline std::string serialize_tasks(const std::vector<Task>& tasks) {
    std::string out;
    for (const auto& t : tasks) out += task_to_json(t).dump() + "\n";
    return out;
}

inline std::vector<Task> load_tasks(const std::string& bytes) {
    std::vector<Task> tasks;
    std::istringstream in(bytes);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            tasks.push_back(task_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ValidationError("task file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return tasks;
}

} // namespace citynav
