#include <catch2/catch_amalgamated.hpp>

#include "citynav/taskgen.hpp"

using namespace citynav;
using Catch::Approx;

namespace {

EnvGraph grid_env(int w = 20, int h = 20, int lms = 4, std::uint64_t seed = 9) {
    SyntheticSpec spec;
    spec.width = w;
    spec.height = h;
    spec.blocked_fraction = 0.0;
    spec.landmark_count = lms;
    spec.target_visible_fraction = 0.6;
    spec.seed = seed;
    return gen_synthetic(spec);
}

} // namespace

TEST_CASE("budget is 2.5x the minimum, rounded up", "[taskgen]") {
    CHECK(budget_for(1) == 3);
    CHECK(budget_for(4) == 10);
    CHECK(budget_for(5) == 13);
    CHECK(budget_for(7) == 18);
    CHECK(budget_for(30) == 75);
    for (int l = 1; l < 300; ++l) CHECK(budget_for(l) == int(std::ceil(2.5 * l)));
}

TEST_CASE("goal descriptions place the goal relative to visible landmarks", "[taskgen]") {
    const EnvGraph env = grid_env();
    // pick any node that sees a landmark
    NodeId goal = 0;
    for (NodeId id : env.node_ids()) {
        if (env.sees_landmark(id)) {
            goal = id;
            break;
        }
    }
    const GoalDescription d = describe_goal(env, goal);
    REQUIRE(!d.r1.empty());
    const Coord g = env.node(goal).coord;
    for (const auto& e : d.r1) {
        const Landmark* lm = env.find_landmark(e.lm);
        REQUIRE(lm != nullptr);
        // landmark coordinate plus the described offset lands on the goal
        const Coord reached = lm->coord + rel_to_steps(e.rel);
        CHECK(reached.x == Approx(g.x).margin(1e-9));
        CHECK(reached.y == Approx(g.y).margin(1e-9));
    }
    // landmark pair relations cover each unordered pair once
    const std::size_t n = env.landmarks().size();
    CHECK(d.r2.size() == n * (n - 1) / 2);
    for (const auto& e : d.r2) {
        const Landmark* a = env.find_landmark(e.a);
        const Landmark* b = env.find_landmark(e.b);
        REQUIRE(a != nullptr);
        REQUIRE(b != nullptr);
        const Coord reached = a->coord + rel_to_steps(e.rel);
        CHECK(reached.x == Approx(b->coord.x).margin(1e-9));
        CHECK(reached.y == Approx(b->coord.y).margin(1e-9));
    }
}

TEST_CASE("descriptions render as landmark-relative sentences", "[taskgen]") {
    GoalDescription d;
    d.r1.push_back({100, rel_pos({0, 0}, {34, -43})});
    d.r2.push_back({100, 200, rel_pos({0, 0}, {0, 10})});
    const std::string text =
        render_description(d, [](NodeId id) { return id == 100 ? "opera house" : "old bridge"; });
    CHECK(text ==
          "the destination is approximately 2740 meters southeast from the opera house. "
          "the old bridge is approximately 500 meters north from the opera house");
}

TEST_CASE("distances in descriptions are rounded to ten meters", "[taskgen]") {
    CHECK(round_to_10m(2740.894) == 2740);
    CHECK(round_to_10m(2745.0) == 2750);
    CHECK(round_to_10m(74.9) == 70);
    CHECK(round_to_10m(75.1) == 80);
}

TEST_CASE("sampled tasks satisfy the protocol invariants", "[taskgen]") {
    const EnvGraph env = grid_env();
    const auto tasks = sample_tasks(env, 50, 12, 4, 3);
    REQUIRE(tasks.size() == 50);
    for (const auto& t : tasks) {
        CHECK(t.start != t.goal);
        CHECK(t.min_steps >= 1);
        CHECK(t.budget == budget_for(t.min_steps));
        CHECK(*env.shortest_path_len(t.start, t.goal) == t.min_steps);
        CHECK(env.sees_landmark(t.goal));
        CHECK(!t.description.r1.empty());
    }
    // ids are stable and zero-padded
    CHECK(tasks[0].task_id == "t0000");
    CHECK(tasks[49].task_id == "t0049");
}

TEST_CASE("task lengths track the requested distribution", "[taskgen]") {
    const EnvGraph env = grid_env(30, 30, 5, 4);
    const auto tasks = sample_tasks(env, 300, 14, 4, 8);
    double mean = 0.0;
    for (const auto& t : tasks) mean += t.min_steps;
    mean /= double(tasks.size());
    CHECK(mean == Approx(14.0).margin(1.5));
}

TEST_CASE("task sampling is deterministic in the seed", "[taskgen]") {
    const EnvGraph env = grid_env();
    const auto a = sample_tasks(env, 20, 10, 3, 7);
    const auto b = sample_tasks(env, 20, 10, 3, 7);
    CHECK(serialize_tasks(a) == serialize_tasks(b));
    const auto c = sample_tasks(env, 20, 10, 3, 8);
    CHECK(serialize_tasks(a) != serialize_tasks(c));
}

TEST_CASE("task files round-trip through JSONL", "[taskgen]") {
    const EnvGraph env = grid_env();
    const auto tasks = sample_tasks(env, 10, 10, 3, 5);
    const std::string bytes = serialize_tasks(tasks);
    const auto back = load_tasks(bytes);
    REQUIRE(back.size() == tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        CHECK(back[i].task_id == tasks[i].task_id);
        CHECK(back[i].start == tasks[i].start);
        CHECK(back[i].goal == tasks[i].goal);
        CHECK(back[i].min_steps == tasks[i].min_steps);
        CHECK(back[i].budget == tasks[i].budget);
        CHECK(back[i].description.r1.size() == tasks[i].description.r1.size());
        CHECK(back[i].description.r2.size() == tasks[i].description.r2.size());
    }
    CHECK(serialize_tasks(back) == bytes);
}

TEST_CASE("malformed task records are rejected", "[taskgen]") {
    CHECK_THROWS_AS(load_tasks("{\"task_id\":\"x\"}\n"), ValidationError);
    CHECK_THROWS_AS(task_from_json(json{{"task_id", "t"},
                                        {"start", 1},
                                        {"goal", 1},
                                        {"min_steps", 3},
                                        {"budget", 8},
                                        {"r1", json::array({{{"lm", 5}, {"bearing_deg", 0.0}, {"distance_m", 10.0}}})}}),
                    ValidationError); // start == goal
    CHECK_THROWS_AS(sample_tasks(grid_env(), 0, 10, 3, 1), ValidationError);
}
