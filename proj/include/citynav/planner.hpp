#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "citynav/memory.hpp"
#include "citynav/spatial.hpp"

namespace citynav {

// ---------------------------------------------------------------------------
// Plan model
// ---------------------------------------------------------------------------

enum class Until { intersection, blocked, steps, arrival };

struct SubGoal {
    int direction = 0; // octant index
    Until until = Until::intersection;
    int steps_n = 1; // only for Until::steps

    friend bool operator==(const SubGoal&, const SubGoal&) = default;
};

struct Plan {
    std::vector<SubGoal> subgoals;
    int cursor = 0;
    int created_step = 0;
    int moves_in_active = 0; // moves made under the active sub-goal

    bool done() const { return cursor >= int(subgoals.size()); }
    const SubGoal* active() const { return done() ? nullptr : &subgoals[cursor]; }
};

struct Connection {
    int direction = 0; // octant toward the neighbor
    NodeId target = 0;
    Coord target_coord; // agent frame
    bool visited = false;
};

struct ActionChoice {
    int direction = 0;
    NodeId target = 0;
    std::string reason;
};

inline std::string render_subgoal(const SubGoal& sg) {
    std::string s = "Move ";
    s += kOctantNames[sg.direction];
    switch (sg.until) {
        case Until::intersection: s += " until the next intersection."; break;
        case Until::blocked: s += " until the way is blocked."; break;
        case Until::steps: s += " for " + std::to_string(sg.steps_n) + " steps."; break;
        case Until::arrival: s += " until arrival at the goal."; break;
    }
    return s;
}

inline std::vector<std::string> render_plan(const Plan& plan) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < plan.subgoals.size(); ++i) {
        out.push_back(std::to_string(i + 1) + ". " + render_subgoal(plan.subgoals[i]));
    }
    return out;
}

// Tolerant reverse of render_subgoal, also accepting free-form plan step text
// from language models ("Move South to head directly towards the goal...").
inline std::optional<SubGoal> parse_subgoal_text(const std::string& text) {
    std::string lower;
    for (char c : text) lower += char(std::tolower(static_cast<unsigned char>(c)));
    SubGoal sg;
    const std::optional<int> dir = find_direction_word(text);
    if (!dir) return std::nullopt;
    sg.direction = *dir;
    static const std::regex steps_re(R"(for\s+(\d+)\s+steps?)");
    std::smatch m;
    if (lower.find("intersection") != std::string::npos) {
        sg.until = Until::intersection;
    } else if (lower.find("block") != std::string::npos) {
        sg.until = Until::blocked;
    } else if (std::regex_search(lower, m, steps_re)) {
        sg.until = Until::steps;
        sg.steps_n = std::max(1, std::stoi(m[1]));
    } else if (lower.find("arriv") != std::string::npos || lower.find("goal") != std::string::npos ||
               lower.find("destination") != std::string::npos) {
        sg.until = Until::arrival;
    } else {
        sg.until = Until::intersection;
    }
    return sg;
}

// ---------------------------------------------------------------------------
// Plan maintenance
// ---------------------------------------------------------------------------

struct NodeContext {
    std::size_t degree = 0;
    std::vector<Connection> connections;
    bool at_goal = false; // per the agent's own estimate
};

inline bool direction_available(const std::vector<Connection>& conns, int octant) {
    for (const auto& c : conns)
        if (c.direction == octant) return true;
    return false;
}

inline bool check_until(const SubGoal& sg, const NodeContext& ctx, int moves_done) {
    switch (sg.until) {
        case Until::intersection: return ctx.degree >= 3;
        case Until::blocked: return !direction_available(ctx.connections, sg.direction);
        case Until::steps: return moves_done >= sg.steps_n;
        case Until::arrival: return ctx.at_goal;
    }
    return false;
}

namespace detail {

inline int axis_octant(double component, bool vertical) {
    if (vertical) return component > 0.0 ? 0 : 4; // N or S
    return component > 0.0 ? 2 : 6;               // E or W
}

} // namespace detail

// Rectilinear decomposition of the goal delta, dominant axis first. One
// sub-goal when the delta is axis-aligned, else the three-step shape
// dominant/secondary/dominant.
inline std::vector<SubGoal> decompose_goal(Coord delta) {
    std::vector<SubGoal> out;
    const double ax = std::abs(delta.x), ay = std::abs(delta.y);
    if (ax == 0.0 && ay == 0.0) return out;
    const bool vertical_dominant = ay >= ax;
    const int dom = detail::axis_octant(vertical_dominant ? delta.y : delta.x, vertical_dominant);
    if ((vertical_dominant ? ax : ay) == 0.0) {
        out.push_back({dom, Until::arrival, 1});
        return out;
    }
    const int sec = detail::axis_octant(vertical_dominant ? delta.x : delta.y, !vertical_dominant);
    out.push_back({dom, Until::intersection, 1});
    out.push_back({sec, Until::intersection, 1});
    out.push_back({dom, Until::arrival, 1});
    return out;
}

inline std::vector<SubGoal> exploration_subgoals(const std::vector<Connection>& conns) {
    std::vector<Connection> ordered = conns;
    std::sort(ordered.begin(), ordered.end(),
              [](const Connection& a, const Connection& b) { return a.direction < b.direction; });
    for (const auto& c : ordered) {
        if (!c.visited) return {{c.direction, Until::intersection, 1}};
    }
    return ordered.empty() ? std::vector<SubGoal>{} : std::vector<SubGoal>{{ordered.front().direction, Until::intersection, 1}};
}

inline Coord octant_unit(int octant) {
    const double rad = octant_center(octant) * M_PI / 180.0;
    return {std::sin(rad), std::cos(rad)};
}

// Net direction of the sub-goals at and after the cursor.
inline std::optional<double> plan_net_bearing(const Plan& plan) {
    Coord v{0.0, 0.0};
    for (int i = plan.cursor; i < int(plan.subgoals.size()); ++i) {
        v = v + octant_unit(plan.subgoals[i].direction);
    }
    if (std::abs(v.x) < 1e-12 && std::abs(v.y) < 1e-12) return std::nullopt;
    return rel_pos({0.0, 0.0}, v).bearing_deg;
}

inline bool subgoal_feasible(const SubGoal& sg, const std::vector<Connection>& conns) {
    for (const auto& c : conns) {
        if (std::abs(signed_angle_diff(octant_center(c.direction), octant_center(sg.direction))) <= 45.0) return true;
    }
    return false;
}

// Keeps the old plan while its remaining net direction still points within 90
// degrees of the fused goal and the active sub-goal is feasible; otherwise a
// fresh rectilinear plan (or an exploration plan when lost).
inline Plan update_plan(const std::optional<Plan>& old, const WorkingState& ws, Coord current,
                        const NodeContext& ctx, int step) {
    if (ws.lost) {
        Plan p;
        p.subgoals = exploration_subgoals(ctx.connections);
        p.created_step = step;
        return p;
    }
    const Coord delta = ws.fused.coord - current;
    if (old && !old->done()) {
        const auto net = plan_net_bearing(*old);
        const bool delta_zero = delta.x == 0.0 && delta.y == 0.0;
        if (net && !delta_zero) {
            const double goal_bearing = rel_pos({0.0, 0.0}, delta).bearing_deg;
            if (std::abs(signed_angle_diff(goal_bearing, *net)) < 90.0 &&
                subgoal_feasible(old->subgoals[old->cursor], ctx.connections)) {
                return *old;
            }
        }
    }
    Plan p;
    p.subgoals = decompose_goal(delta);
    if (p.subgoals.empty()) p.subgoals = exploration_subgoals(ctx.connections);
    // A replan that reproduces the current sub-goal list keeps its stage:
    // restarting an unchanged plan would redo legs already carried out.
    if (old && !old->done() && p.subgoals == old->subgoals) return *old;
    p.created_step = step;
    return p;
}

// ---------------------------------------------------------------------------
// Action selection
// ---------------------------------------------------------------------------

// Moves the cursor past satisfied sub-goals. Every condition except blocked
// needs at least one move first, so a fresh plan is never skipped through.
inline void advance_cursor(Plan& plan, const NodeContext& ctx) {
    while (!plan.done()) {
        const SubGoal& sg = *plan.active();
        const bool moved = plan.moves_in_active > 0 || sg.until == Until::blocked;
        if (moved && check_until(sg, ctx, plan.moves_in_active)) {
            ++plan.cursor;
            plan.moves_in_active = 0;
        } else {
            break;
        }
    }
}

// Advances the cursor, then takes the legal move closest to the active
// direction. Never reverses the previous move unless the node is a dead end.
inline ActionChoice select_action(Plan& plan, const NodeContext& ctx, std::optional<NodeId> prev_node) {
    advance_cursor(plan, ctx);

    std::vector<Connection> candidates = ctx.connections;
    if (prev_node && candidates.size() > 1) {
        std::erase_if(candidates, [&](const Connection& c) { return c.target == *prev_node; });
    }

    const std::optional<int> target_dir = plan.done() ? std::nullopt : std::optional<int>(plan.active()->direction);
    const Connection* best = nullptr;
    double best_dev = 0.0;
    for (const auto& c : candidates) {
        const double dev = target_dir
                               ? std::abs(signed_angle_diff(octant_center(c.direction), octant_center(*target_dir)))
                               : octant_center(c.direction); // no plan: plain clockwise order
        const bool better =
            !best || dev < best_dev ||
            (dev == best_dev && ((!c.visited && best->visited) ||
                                 (c.visited == best->visited && c.direction < best->direction)));
        if (better) {
            best = &c;
            best_dev = dev;
        }
    }

    ActionChoice a;
    a.direction = best->direction;
    a.target = best->target;
    std::ostringstream reason;
    if (ctx.connections.size() == 1) {
        reason << "only available option (dead end)";
    } else if (target_dir) {
        reason << kOctantNames[best->direction] << " deviates " << int(best_dev) << " degrees from the sub-goal "
               << kOctantNames[*target_dir];
    } else {
        reason << "no active sub-goal; taking " << kOctantNames[best->direction];
    }
    reason << (best->visited ? "; target already visited" : "; target unvisited");
    a.reason = reason.str();
    // Only moves inside the active direction's 45-degree cone execute the
    // sub-goal; forced detours leave the cursor where it is.
    if (!plan.done() &&
        std::abs(signed_angle_diff(octant_center(a.direction), octant_center(plan.active()->direction))) <= 45.0) {
        ++plan.moves_in_active;
    }
    return a;
}

} // namespace citynav
