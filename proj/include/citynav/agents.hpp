#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "citynav/env.hpp"
#include "citynav/lm.hpp"
#include "citynav/memory.hpp"
#include "citynav/perception.hpp"
#include "citynav/planner.hpp"
#include "citynav/spatial.hpp"
#include "citynav/taskgen.hpp"

namespace citynav {

enum class AgentKind { prep, prep_no_reflection, prep_no_planning, react, random };

inline const char* agent_kind_name(AgentKind k) {
    switch (k) {
        case AgentKind::prep: return "prep";
        case AgentKind::prep_no_reflection: return "prep_no_reflection";
        case AgentKind::prep_no_planning: return "prep_no_planning";
        case AgentKind::react: return "react";
        default: return "random";
    }
}

inline std::optional<AgentKind> parse_agent_kind(const std::string& s) {
    for (AgentKind k : {AgentKind::prep, AgentKind::prep_no_reflection, AgentKind::prep_no_planning,
                        AgentKind::react, AgentKind::random}) {
        if (s == agent_kind_name(k)) return k;
    }
    return std::nullopt;
}

struct EpisodeResult {
    std::string task_id;
    bool success = false;
    int steps_taken = 0;
    int min_steps = 0;
    std::vector<NodeId> path;
    std::string failure_cause; // non-empty only for reasoner hard failures
};

struct EpisodeLog {
    EpisodeResult result;
    std::vector<json> trace; // one entry per step, schema below
};

struct EpisodeConfig {
    AgentKind kind = AgentKind::prep;
    PerceptionProfile profile;
    std::uint64_t seed = 0;
    LmBackend* backend = nullptr;          // null: direct scripted components
    const VisionClient* vision = nullptr;  // non-null: remote perception
    int reasoner_retries = 2;
    int summary_window = kSummaryWindow;
};

// Stable per-episode stream: independent of batch iteration order.
inline std::uint64_t episode_seed(std::uint64_t batch_seed, const std::string& task_id, AgentKind kind) {
    return mix64(mix64(batch_seed, fnv1a64(task_id)), std::uint64_t(kind) + 1);
}

namespace detail {

struct Frame {
    Coord origin; // world coord of the episode start node

    Coord to_agent(Coord world) const { return world - origin; }
};

// Instantaneous goal estimate: every detection triangulates, either directly
// through a goal relation or through one pairwise hop to a goal-visible
// landmark; contributions are averaged and snapped to integer steps.
inline std::optional<Coord> instant_goal(const std::vector<Detection>& detections, const GoalDescription& d,
                                         Coord agent_coord) {
    double sx = 0.0, sy = 0.0;
    int n = 0;
    for (const auto& det : detections) {
        const R1Entry* direct = nullptr;
        for (const auto& e : d.r1) {
            if (e.lm == det.landmark) direct = &e;
        }
        Coord delta{0.0, 0.0};
        if (direct) {
            delta = rel_to_steps(triangulate_goal(det.rel, direct->rel));
        } else {
            const R1Entry& anchor = d.r1.front();
            std::optional<Coord> hop;
            for (const auto& p : d.r2) {
                if (p.a == det.landmark && p.b == anchor.lm) {
                    hop = rel_to_steps(p.rel);
                } else if (p.b == det.landmark && p.a == anchor.lm) {
                    hop = Coord{0.0, 0.0} - rel_to_steps(p.rel);
                }
                if (hop) break;
            }
            if (!hop) continue; // a landmark the description cannot anchor
            delta = rel_to_steps(det.rel) + *hop + rel_to_steps(anchor.rel);
        }
        sx += agent_coord.x + delta.x;
        sy += agent_coord.y + delta.y;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return Coord{round_half_away(sx / n), round_half_away(sy / n)};
}

inline json trace_entry(int t, NodeId node, Coord coord, const NodeContext& ctx,
                        const std::vector<Detection>& detections, const std::optional<GoalEstimate>& estimate,
                        const Plan* plan, int action_octant) {
    json conns = json::array();
    for (const auto& c : ctx.connections) {
        conns.push_back({{"dir", kOctantNames[c.direction]}, {"node", c.target}, {"visited", c.visited}});
    }
    json dets = json::array();
    for (const auto& d : detections) {
        dets.push_back({{"lm", d.landmark}, {"bearing_deg", d.rel.bearing_deg}, {"distance_m", d.rel.distance_m}});
    }
    json est;
    if (estimate) {
        est = json{{"coord", {coord_number(estimate->coord.x), coord_number(estimate->coord.y)}},
                   {"source", source_name(estimate->source)}};
    }
    json plan_strings = json::array();
    int cursor = 0;
    if (plan) {
        for (const auto& s : render_plan(*plan)) plan_strings.push_back(s);
        cursor = plan->cursor;
    }
    return json{{"t", t},
                {"node", node},
                {"coord", {coord_number(coord.x), coord_number(coord.y)}},
                {"connections", std::move(conns)},
                {"detections", std::move(dets)},
                {"estimate", std::move(est)},
                {"plan", std::move(plan_strings)},
                {"cursor", cursor},
                {"action", kOctantNames[action_octant]}};
}

inline NodeContext node_context(const EnvGraph& env, NodeId node, const Frame& frame,
                                const std::unordered_set<NodeId>& visited, bool at_goal_estimate) {
    NodeContext ctx;
    ctx.degree = env.degree(node);
    ctx.at_goal = at_goal_estimate;
    const Coord here = env.node(node).coord;
    std::vector<Connection> conns;
    for (NodeId nb : env.neighbors(node)) {
        const Coord there = env.node(nb).coord;
        Connection c;
        c.direction = octant_of(rel_pos(here, there).bearing_deg);
        c.target = nb;
        c.target_coord = frame.to_agent(there);
        c.visited = visited.count(nb) != 0;
        conns.push_back(c);
    }
    std::sort(conns.begin(), conns.end(), [](const Connection& a, const Connection& b) {
        return a.direction != b.direction ? a.direction < b.direction : a.target < b.target;
    });
    ctx.connections = std::move(conns);
    return ctx;
}

inline std::vector<Detection> sense(const EnvGraph& env, NodeId node, const EpisodeConfig& cfg, Rng& rng,
                                    std::vector<std::string>* warnings) {
    if (cfg.vision) {
        std::vector<StreetView> views;
        const Node& n = env.node(node);
        const auto& nbrs = env.neighbors(node);
        for (std::size_t i = 0; i < nbrs.size(); ++i) {
            StreetView v;
            v.bearing_deg = rel_pos(n.coord, env.node(nbrs[i]).coord).bearing_deg;
            v.reference = i < n.streetviews.size()
                              ? n.streetviews[i]
                              : "node/" + std::to_string(node) + "/" + std::to_string(i);
            views.push_back(std::move(v));
        }
        std::vector<std::pair<NodeId, std::string>> names;
        for (const auto& lm : env.landmarks()) names.emplace_back(lm.id, lm.name);
        return remote_perceive(*cfg.vision, views, names, warnings);
    }
    return perceive(env, node, cfg.profile, rng);
}

// Connection views for prompt rendering (octant, agent-frame coord, visited).
inline std::vector<ConnectionView> to_views(const NodeContext& ctx) {
    std::vector<ConnectionView> out;
    for (const auto& c : ctx.connections) out.push_back({c.direction, c.target_coord, c.visited});
    return out;
}

} // namespace detail

// Stateless single-step policy: nearest available direction to the
// instantaneous goal bearing, uniform random when nothing is detected.
inline ActionChoice react_policy(const NodeContext& ctx, std::optional<Coord> goal_delta, Rng& rng) {
    const auto& conns = ctx.connections;
    if (!goal_delta || (goal_delta->x == 0.0 && goal_delta->y == 0.0)) {
        const auto& pick = conns[rng.uniform_int(conns.size())];
        return {pick.direction, pick.target, "no detection; random pick"};
    }
    const double goal_bearing = rel_pos({0.0, 0.0}, *goal_delta).bearing_deg;
    const Connection* best = nullptr;
    double best_dev = 0.0;
    for (const auto& c : conns) {
        const double dev = std::abs(signed_angle_diff(octant_center(c.direction), goal_bearing));
        if (!best || dev < best_dev || (dev == best_dev && c.direction < best->direction)) {
            best = &c;
            best_dev = dev;
        }
    }
    return {best->direction, best->target, "closest direction to the detected goal bearing"};
}

// ---------------------------------------------------------------------------
// Episode loop
// ---------------------------------------------------------------------------

// One navigation episode. The agent frame has its origin at the start node;
// positions are exact odometry. Success means standing on the goal node.
inline EpisodeLog run_episode(const EnvGraph& env, const Task& task, const EpisodeConfig& cfg) {
    if (!env.has_node(task.start) || !env.has_node(task.goal)) {
        throw ValidationError("task " + task.task_id + " does not fit this environment");
    }
    EpisodeLog log;
    log.result.task_id = task.task_id;
    log.result.min_steps = task.min_steps;
    log.result.path.push_back(task.start);

    const detail::Frame frame{env.node(task.start).coord};
    Rng rng(episode_seed(cfg.seed, task.task_id, cfg.kind));
    Rng action_rng = rng.fork(0xAC710Full);

    Memory memory;
    std::optional<Plan> plan;
    std::optional<NodeId> prev;
    NodeId current = task.start;
    std::unordered_set<NodeId> visited{current};
    int transport_failures = 0;
    bool hard_fail = false;
    std::string hard_cause;

    const bool use_prompts = cfg.backend != nullptr &&
                             (cfg.kind == AgentKind::prep || cfg.kind == AgentKind::prep_no_reflection ||
                              cfg.kind == AgentKind::prep_no_planning || cfg.kind == AgentKind::react);

    // Transport failures share a per-episode retry budget; exhausting it (or a
    // transcript miss, which no retry can fix) fails the episode with a cause.
    auto ask = [&](const std::string& prompt) -> std::optional<std::string> {
        while (!hard_fail) {
            try {
                return cfg.backend->complete({{Role::user, prompt}});
            } catch (const ReplayMiss& e) {
                hard_fail = true;
                hard_cause = e.what();
            } catch (const std::exception& e) {
                if (++transport_failures > cfg.reasoner_retries) {
                    hard_fail = true;
                    hard_cause = std::string("reasoner failure beyond retry budget: ") + e.what();
                }
            }
        }
        return std::nullopt;
    };

    for (int t = 0; t < task.budget; ++t) {
        if (current == task.goal) break;
        const Coord here = frame.to_agent(env.node(current).coord);

        std::vector<Detection> detections;
        if (cfg.kind != AgentKind::random) {
            detections = detail::sense(env, current, cfg, rng, nullptr);
        } else {
            rng.next(); // keep the stream shape uniform across kinds
        }
        const auto instant = detail::instant_goal(strip_flags(detections), task.description, here);

        std::optional<GoalEstimate> estimate;
        bool lost = false;

        // --- reflect -------------------------------------------------------
        if (cfg.kind == AgentKind::prep || cfg.kind == AgentKind::prep_no_planning) {
            if (use_prompts) {
                struct BackendSummarizer {
                    decltype(ask)* call;
                    std::optional<std::string> summarize_records(const std::vector<EpisodicRecord>& records,
                                                                 std::size_t begin, std::size_t end) const {
                        PromptContext pc;
                        pc.records.assign(records.begin() + begin, records.begin() + end);
                        return (*call)(render_reflection_summary(pc));
                    }
                };
                memory.summarize(BackendSummarizer{&ask}, cfg.summary_window);
            } else {
                memory.summarize(ScriptedSummarizer{}, cfg.summary_window);
            }
        }
        if (cfg.kind == AgentKind::prep || cfg.kind == AgentKind::prep_no_planning) {
            WorkingState ws = memory.reflect(
                instant ? std::optional<GoalEstimate>(GoalEstimate{*instant, GoalEstimate::Source::perceived, t})
                        : std::nullopt,
                here, env.neighbors(current), t);
            lost = ws.lost;
            if (!lost) estimate = ws.fused;
            if (use_prompts && !lost && !memory.perceived_history().empty()) {
                PromptContext pc;
                pc.position = here;
                for (const auto& g : memory.perceived_history()) pc.inferences.push_back(g.coord);
                pc.instant_delta = ws.fused.coord - here;
                if (auto answer = ask(render_reflection_fuse(pc))) {
                    try {
                        const ParsedDecision d = parse_decision(*answer);
                        const auto it = d.extras.find("Answer_Q1");
                        if (it != d.extras.end()) {
                            static const std::regex re(R"(\((-?[0-9.]+), (-?[0-9.]+)\))");
                            std::smatch m;
                            if (std::regex_search(it->second, m, re)) {
                                estimate = GoalEstimate{{std::stod(m[1]), std::stod(m[2])},
                                                        GoalEstimate::Source::fused, t};
                            }
                        }
                    } catch (const ParseError&) {
                        // keep the locally fused estimate
                    }
                }
            }
        } else if (cfg.kind == AgentKind::prep_no_reflection || cfg.kind == AgentKind::react) {
            if (instant) estimate = GoalEstimate{*instant, GoalEstimate::Source::perceived, t};
            lost = !instant;
        }
        if (hard_fail) break;

        const NodeContext ctx = detail::node_context(env, current, frame, visited,
                                                     estimate && estimate->coord == here);

        // --- plan and act ----------------------------------------------------
        std::optional<ActionChoice> action;
        if (cfg.kind == AgentKind::random) {
            const auto& conns = ctx.connections;
            const auto& pick = conns[action_rng.uniform_int(conns.size())];
            action = ActionChoice{pick.direction, pick.target, "random walk"};
        } else if (cfg.kind == AgentKind::react && !use_prompts) {
            action = react_policy(ctx, estimate ? std::optional<Coord>(estimate->coord - here) : std::nullopt,
                                  action_rng);
        } else if (cfg.kind == AgentKind::prep_no_planning && !use_prompts) {
            if (lost) {
                Plan explore;
                explore.subgoals = exploration_subgoals(ctx.connections);
                action = select_action(explore, ctx, prev);
            } else {
                const Coord delta = estimate->coord - here;
                Plan pseudo;
                const CompassLabel label = classify_direction(delta);
                pseudo.subgoals = {{label.at_goal ? 0 : label.octant, Until::arrival, 1}};
                action = select_action(pseudo, ctx, prev);
            }
        } else if (!use_prompts) {
            // prep and prep_no_reflection, direct wiring
            WorkingState ws;
            ws.lost = lost;
            if (!lost) ws.fused = *estimate;
            if (plan) advance_cursor(*plan, ctx);
            Plan next = update_plan(plan, ws, here, ctx, t);
            if (!plan || !(next.subgoals == plan->subgoals && next.cursor == plan->cursor)) {
                plan = std::move(next);
            }
            action = select_action(*plan, ctx, prev);
        } else {
            // prompt-driven wiring over an LmBackend
            if (plan) advance_cursor(*plan, ctx);
            PromptContext pc;
            pc.position = here;
            pc.connections = detail::to_views(ctx);
            std::string prompt;
            const bool planning_kind = cfg.kind == AgentKind::prep || cfg.kind == AgentKind::prep_no_reflection;
            if (planning_kind) {
                if (cfg.kind == AgentKind::prep) {
                    if (estimate) pc.goal_coord = estimate->coord;
                    if (!memory.summaries().empty()) pc.summary_text = memory.summaries().back().text;
                    pc.plan_reflected = true;
                } else {
                    if (estimate) pc.instant_delta = estimate->coord - here;
                    pc.plan_reflected = false;
                }
                if (plan) {
                    for (std::size_t i = std::size_t(plan->cursor); i < plan->subgoals.size(); ++i) {
                        pc.plan_items.push_back(std::to_string(i - std::size_t(plan->cursor) + 1) + ". " +
                                                render_subgoal(plan->subgoals[i]));
                    }
                }
                prompt = render_planning(pc);
            } else {
                pc.show_visited = cfg.kind != AgentKind::react;
                if (cfg.kind == AgentKind::prep_no_planning) {
                    if (estimate) pc.goal_coord = estimate->coord;
                    if (!memory.summaries().empty()) pc.summary_text = memory.summaries().back().text;
                } else if (estimate) {
                    pc.instant_delta = estimate->coord - here;
                }
                prompt = render_react(pc);
            }
            const auto answer = ask(prompt);
            if (hard_fail) break;
            std::optional<ParsedDecision> decision;
            if (answer) {
                try {
                    decision = parse_decision(*answer);
                } catch (const ParseError&) {
                    // unusable answer: fall back to the scripted choice below
                }
            }
            if (decision && planning_kind) {
                if (decision->yes_or_no.value_or(false) && !decision->new_plan.empty()) {
                    Plan parsed = plan_from_strings(decision->new_plan, t);
                    if (!parsed.subgoals.empty()) plan = std::move(parsed);
                } else if (!plan) {
                    WorkingState ws;
                    ws.lost = lost;
                    if (!lost) ws.fused = *estimate;
                    plan = update_plan(std::nullopt, ws, here, ctx, t);
                }
            }
            if (decision && decision->action) {
                for (const auto& c : ctx.connections) {
                    if (c.direction == *decision->action) {
                        action = ActionChoice{c.direction, c.target, "backend decision"};
                        break;
                    }
                }
            }
            if (!action) {
                // recoverable: fall back to the scripted choice for this step
                WorkingState ws;
                ws.lost = lost;
                if (!lost) ws.fused = *estimate;
                Plan fallback = plan ? *plan : update_plan(std::nullopt, ws, here, ctx, t);
                action = select_action(fallback, ctx, prev);
                if (plan) plan->moves_in_active = fallback.moves_in_active;
            } else if (plan && planning_kind) {
                ++plan->moves_in_active;
            }
        }

        // --- record and move -------------------------------------------------
        const Plan* plan_view = plan ? &*plan : nullptr;
        log.trace.push_back(detail::trace_entry(t, current, here, ctx, detections, estimate, plan_view,
                                                action->direction));

        if (cfg.kind != AgentKind::react && cfg.kind != AgentKind::random) {
            EpisodicRecord rec;
            rec.t = t;
            rec.node = current;
            rec.coord = here;
            for (const auto& c : ctx.connections) rec.options.push_back({c.direction, c.target, c.target_coord, c.visited});
            rec.action = action->direction;
            rec.arrived = action->target;
            rec.arrived_coord = frame.to_agent(env.node(action->target).coord);
            rec.estimate = estimate;
            memory.record_step(std::move(rec));
        }

        prev = current;
        current = action->target;
        visited.insert(current);
        log.result.path.push_back(current);
        ++log.result.steps_taken;
    }

    log.result.success = current == task.goal;
    if (hard_fail) log.result.failure_cause = hard_cause;
    return log;
}

} // namespace citynav
