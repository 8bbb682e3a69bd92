#include <catch2/catch_amalgamated.hpp>

#include "citynav/agents.hpp"

using namespace citynav;

namespace {

// 0 -- 1 -- 2 along the x axis, one gate landmark further east.
EnvGraph line_env() {
    EnvGraph env;
    for (NodeId i = 0; i < 3; ++i) env.add_node({i, {double(i), 0.0}, {}});
    env.add_edge(0, 1);
    env.add_edge(1, 2);
    env.add_landmark({100, "gate", {3.0, 0.0}, 250.0});
    env.finalize();
    return env;
}

// Start node 0 only connects north/south; the goal sits southeast.
//   2
//   |
//   0
//   |
//   1 -- 3(goal)
EnvGraph cross_env() {
    EnvGraph env;
    env.add_node({0, {0.0, 0.0}, {}});
    env.add_node({1, {0.0, -1.0}, {}});
    env.add_node({2, {0.0, 1.0}, {}});
    env.add_node({3, {1.0, -1.0}, {}});
    env.add_edge(0, 1);
    env.add_edge(0, 2);
    env.add_edge(1, 3);
    env.add_landmark({50, "obelisk", {2.0, -1.0}, 500.0});
    env.finalize();
    return env;
}

Task task_between(const EnvGraph& env, const std::string& id, NodeId start, NodeId goal) {
    Task t;
    t.task_id = id;
    t.start = start;
    t.goal = goal;
    t.description = describe_goal(env, goal);
    t.min_steps = *env.shortest_path_len(start, goal);
    t.budget = budget_for(t.min_steps);
    return t;
}

bool legal_path(const EnvGraph& env, const std::vector<NodeId>& path) {
    for (std::size_t i = 1; i < path.size(); ++i) {
        const auto& nbrs = env.neighbors(path[i - 1]);
        if (std::find(nbrs.begin(), nbrs.end(), path[i]) == nbrs.end()) return false;
    }
    return true;
}

EpisodeConfig direct_cfg(AgentKind kind, std::uint64_t seed) {
    EpisodeConfig cfg;
    cfg.kind = kind;
    cfg.profile = profile_from_table(ProfileKind::oracle, 0.5);
    cfg.seed = seed;
    return cfg;
}

// Drops the first `fail_first` requests on the floor, then delegates.
struct FlakyBackend : LmBackend {
    LmBackend& inner;
    int fail_first = 0;
    int calls = 0;

    FlakyBackend(LmBackend& b, int n) : inner(b), fail_first(n) {}

    std::string complete(const std::vector<ChatTurn>& turns) override {
        if (calls++ < fail_first) throw TransportError("connection reset");
        return inner.complete(turns);
    }
};

} // namespace

TEST_CASE("episode seeds are stable across batch order and distinct per agent", "[agents][seed]") {
    CHECK(episode_seed(7, "t0001", AgentKind::prep) == 4332498702847353848ull);
    CHECK(episode_seed(7, "t0001", AgentKind::prep) == episode_seed(7, "t0001", AgentKind::prep));
    CHECK(episode_seed(7, "t0001", AgentKind::prep) != episode_seed(7, "t0001", AgentKind::react));
    CHECK(episode_seed(7, "t0001", AgentKind::prep) != episode_seed(7, "t0002", AgentKind::prep));
    CHECK(episode_seed(7, "t0001", AgentKind::prep) != episode_seed(8, "t0001", AgentKind::prep));
}

TEST_CASE("react walks straight toward a goal detected due east", "[agents][react]") {
    const EnvGraph env = line_env();
    const Task task = task_between(env, "east", 0, 2);
    const EpisodeLog log = run_episode(env, task, direct_cfg(AgentKind::react, 1));
    CHECK(log.result.success);
    CHECK(log.result.steps_taken == 2);
    CHECK(log.result.path == std::vector<NodeId>{0, 1, 2});
    REQUIRE(log.trace.size() == 2);
    CHECK(log.trace[0].at("action") == "East");
    CHECK(log.trace[0].at("t") == 0);
    CHECK(log.trace[0].at("estimate").at("source") == "perceived");
}

TEST_CASE("the planning ablation follows the dominant octant", "[agents][ablation]") {
    const EnvGraph env = cross_env();
    const Task task = task_between(env, "se", 0, 3);
    const EpisodeLog log = run_episode(env, task, direct_cfg(AgentKind::prep_no_planning, 1));
    CHECK(log.result.success);
    // goal southeast, only north/south available: south deviates least
    CHECK(log.result.path == std::vector<NodeId>{0, 1, 3});
    CHECK(log.trace[0].at("action") == "South");
}

TEST_CASE("the reflection ablation explores when nothing is ever detected", "[agents][ablation]") {
    EnvGraph env;
    for (NodeId i = 0; i < 3; ++i) env.add_node({i, {double(i), 0.0}, {}});
    env.add_edge(0, 1);
    env.add_edge(1, 2);
    env.finalize();
    Task task;
    task.task_id = "blind";
    task.start = 0;
    task.goal = 2;
    task.min_steps = 2;
    task.budget = budget_for(2);
    const EpisodeLog log = run_episode(env, task, direct_cfg(AgentKind::prep_no_reflection, 1));
    CHECK(log.result.success);
    CHECK(log.result.path == std::vector<NodeId>{0, 1, 2}); // unvisited-first exploration
    CHECK(log.trace[0].at("estimate").is_null());
}

TEST_CASE("prep completes clean-grid tasks within budget", "[agents][prep]") {
    SyntheticSpec spec;
    spec.width = 8;
    spec.height = 8;
    spec.landmark_count = 2;
    spec.seed = 3;
    const EnvGraph env = gen_synthetic(spec);
    for (const Task& task : sample_tasks(env, 5, 6.0, 2.0, 4)) {
        const EpisodeLog log = run_episode(env, task, direct_cfg(AgentKind::prep, 9));
        CHECK(log.result.success);
        CHECK(log.result.steps_taken <= task.budget);
        CHECK(int(log.trace.size()) == log.result.steps_taken);
        CHECK(log.result.path.front() == task.start);
        CHECK(log.result.path.back() == task.goal);
        CHECK(legal_path(env, log.result.path));
    }
}

TEST_CASE("random walks are seed-deterministic and budget-bounded", "[agents][random]") {
    SyntheticSpec spec;
    spec.width = 6;
    spec.height = 6;
    spec.landmark_count = 1;
    spec.seed = 11;
    const EnvGraph env = gen_synthetic(spec);
    const Task task = task_between(env, "walk", env.node_ids().front(), env.node_ids().back());

    const EpisodeLog a = run_episode(env, task, direct_cfg(AgentKind::random, 5));
    const EpisodeLog b = run_episode(env, task, direct_cfg(AgentKind::random, 5));
    CHECK(a.result.path == b.result.path);
    CHECK(a.trace == b.trace);
    CHECK(a.result.steps_taken <= task.budget);
    CHECK(legal_path(env, a.result.path));
    CHECK(a.result.failure_cause.empty()); // budget exhaustion is not a hard failure

    const EpisodeLog c = run_episode(env, task, direct_cfg(AgentKind::random, 6));
    CHECK(a.result.path != c.result.path);
}

TEST_CASE("episodes reject tasks that do not fit the environment", "[agents]") {
    const EnvGraph env = line_env();
    Task task = task_between(env, "east", 0, 2);
    task.start = 99;
    CHECK_THROWS_AS(run_episode(env, task, direct_cfg(AgentKind::react, 1)), ValidationError);
}

TEST_CASE("prompt-driven react matches the direct wiring on easy terrain", "[agents][backend]") {
    const EnvGraph env = line_env();
    const Task task = task_between(env, "east", 0, 2);

    const EpisodeLog direct = run_episode(env, task, direct_cfg(AgentKind::react, 1));
    ScriptedBackend scripted;
    EpisodeConfig cfg = direct_cfg(AgentKind::react, 1);
    cfg.backend = &scripted;
    const EpisodeLog prompted = run_episode(env, task, cfg);
    CHECK(prompted.result.success);
    CHECK(prompted.result.path == direct.result.path);
}

TEST_CASE("recorded transcripts replay to the identical episode", "[agents][backend]") {
    const EnvGraph env = cross_env();
    const Task task = task_between(env, "se", 0, 3);

    ScriptedBackend scripted;
    RecordingBackend recorder(scripted);
    EpisodeConfig cfg = direct_cfg(AgentKind::prep, 2);
    cfg.backend = &recorder;
    const EpisodeLog live = run_episode(env, task, cfg);
    CHECK(live.result.success);

    ReplayBackend replay = ReplayBackend::from_jsonl(recorder.to_jsonl());
    cfg.backend = &replay;
    const EpisodeLog replayed = run_episode(env, task, cfg);
    CHECK(replayed.result.path == live.result.path);
    CHECK(replayed.trace == live.trace);
}

TEST_CASE("a transcript miss fails the episode with a cause", "[agents][backend]") {
    const EnvGraph env = line_env();
    const Task task = task_between(env, "east", 0, 2);
    ReplayBackend empty;
    EpisodeConfig cfg = direct_cfg(AgentKind::prep, 1);
    cfg.backend = &empty;
    const EpisodeLog log = run_episode(env, task, cfg);
    CHECK(!log.result.success);
    CHECK(log.result.steps_taken == 0);
    CHECK(log.trace.empty());
    CHECK(log.result.failure_cause.find("no recorded answer") != std::string::npos);
}

TEST_CASE("transient reasoner failures are retried within the budget", "[agents][backend]") {
    const EnvGraph env = line_env();
    const Task task = task_between(env, "east", 0, 2);

    ScriptedBackend scripted;
    FlakyBackend two_glitches(scripted, 2);
    EpisodeConfig cfg = direct_cfg(AgentKind::react, 1);
    cfg.backend = &two_glitches;
    const EpisodeLog ok = run_episode(env, task, cfg);
    CHECK(ok.result.success);
    CHECK(ok.result.failure_cause.empty());

    FlakyBackend three_glitches(scripted, 3);
    cfg.backend = &three_glitches;
    const EpisodeLog bad = run_episode(env, task, cfg);
    CHECK(!bad.result.success);
    CHECK(bad.result.failure_cause.find("retry budget") != std::string::npos);
}
