#include <catch2/catch_amalgamated.hpp>

#include "citynav/env.hpp"

using namespace citynav;
using Catch::Approx;

namespace {

// 2x3 block with one landmark northeast of it:
//   3 -- 4 -- 5        node id = y*3 + x, coords (x, y)
//   |    |    |
//   0 -- 1 -- 2
EnvGraph block_env() {
    EnvGraph env;
    for (NodeId y = 0; y < 2; ++y) {
        for (NodeId x = 0; x < 3; ++x) {
            env.add_node({y * 3 + x, {double(x), double(y)}, {}});
        }
    }
    for (NodeId x = 0; x < 2; ++x) {
        env.add_edge(x, x + 1);
        env.add_edge(3 + x, 4 + x);
    }
    for (NodeId x = 0; x < 3; ++x) env.add_edge(x, x + 3);
    env.add_landmark({100, "tower", {3.0, 2.0}, 200.0});
    env.finalize();
    return env;
}

} // namespace

TEST_CASE("graph construction rejects malformed input", "[env]") {
    EnvGraph env;
    env.add_node({0, {0, 0}, {}});
    CHECK_THROWS_AS(env.add_node({0, {1, 1}, {}}), ValidationError);
    CHECK_THROWS_AS(env.add_edge(0, 0), ValidationError);
    CHECK_THROWS_AS(env.add_edge(0, 9), ValidationError);
    env.add_node({1, {1, 0}, {}});
    env.add_edge(0, 1);
    env.add_edge(1, 0); // duplicate, ignored
    CHECK(env.neighbors(0).size() == 1);
    CHECK_THROWS_AS(env.add_landmark({1, "clash", {0, 0}, 100.0}), ValidationError);
    CHECK_THROWS_AS(env.add_landmark({50, "flat", {0, 0}, 0.0}), ValidationError);
}

TEST_CASE("adjacency is symmetric and sorted after finalize", "[env]") {
    const EnvGraph env = block_env();
    for (NodeId id : env.node_ids()) {
        const auto& nbrs = env.neighbors(id);
        CHECK(std::is_sorted(nbrs.begin(), nbrs.end()));
        for (NodeId nb : nbrs) {
            const auto& back = env.neighbors(nb);
            CHECK(std::find(back.begin(), back.end(), id) != back.end());
        }
    }
    CHECK(env.degree(1) == 3);
    CHECK(env.degree(0) == 2);
    CHECK_NOTHROW(validate_env(env));
}

TEST_CASE("shortest_path_len counts edges", "[env]") {
    const EnvGraph env = block_env();
    CHECK(env.shortest_path_len(0, 0) == 0);
    CHECK(env.shortest_path_len(0, 2) == 2);
    CHECK(env.shortest_path_len(0, 5) == 3);
    CHECK(env.shortest_path_len(3, 2) == 3);

    EnvGraph split;
    split.add_node({0, {0, 0}, {}});
    split.add_node({1, {5, 5}, {}});
    split.finalize();
    CHECK(!split.shortest_path_len(0, 1).has_value());
}

TEST_CASE("bfs_distances agrees with pairwise queries", "[env]") {
    const EnvGraph env = block_env();
    const auto dist = env.bfs_distances(0);
    for (NodeId id : env.node_ids()) {
        REQUIRE(dist.count(id) == 1);
        CHECK(dist.at(id) == *env.shortest_path_len(0, id));
    }
}

TEST_CASE("visible_landmarks applies the visibility radius", "[env]") {
    const EnvGraph env = block_env();
    // node 5 at (2,1) is sqrt(2) steps = ~70.7 m from the tower: outside 200 m? no, inside
    const auto at5 = env.visible_landmarks(5);
    REQUIRE(at5.size() == 1);
    CHECK(at5[0].landmark->name == "tower");
    CHECK(at5[0].rel.distance_m == Approx(50.0 * std::sqrt(2.0)));
    CHECK(at5[0].rel.bearing_deg == Approx(45.0));
    // node 0 at (0,0) is sqrt(13) steps = ~180 m away: still visible
    CHECK(env.visible_landmarks(0).size() == 1);
    CHECK(env.sees_landmark(0));

    EnvGraph tight = block_env();
    // shrink: rebuild with a 100 m radius instead
    EnvGraph env2;
    for (NodeId id : tight.node_ids()) env2.add_node(tight.node(id));
    env2.add_edge(0, 1);
    env2.add_landmark({100, "tower", {3.0, 2.0}, 100.0});
    env2.finalize();
    CHECK(env2.visible_landmarks(0).empty());
    CHECK(env2.visible_landmarks(5).size() == 1);
}

TEST_CASE("environment serialization round-trips", "[env]") {
    const EnvGraph env = block_env();
    const std::string bytes = serialize_env(env);
    const EnvGraph back = load_env(bytes);
    CHECK(back.node_count() == env.node_count());
    CHECK(back.landmarks().size() == env.landmarks().size());
    for (NodeId id : env.node_ids()) {
        CHECK(back.node(id).coord == env.node(id).coord);
        CHECK(back.neighbors(id) == env.neighbors(id));
    }
    CHECK(back.landmarks()[0].visibility_radius_m == env.landmarks()[0].visibility_radius_m);
    // serialization is deterministic
    CHECK(serialize_env(back) == bytes);
}

TEST_CASE("load_env rejects broken files", "[env]") {
    CHECK_THROWS_AS(load_env("not json"), ValidationError);
    CHECK_THROWS_AS(load_env(R"({"nodes":[{"id":0}]})"), ValidationError);             // missing coords
    CHECK_THROWS_AS(load_env(R"({"nodes":[{"id":0,"x":0,"y":0}],"edges":[[0,7]]})"),
                    ValidationError);                                                   // dangling edge
    CHECK_THROWS_AS(load_env(R"({"meta":{"step_m":10}})"), ValidationError);            // wrong scale
    CHECK_THROWS_AS(load_env(R"({"nodes":[{"id":0,"x":0,"y":0}],"edges":[[0,0]]})"),
                    ValidationError);                                                   // self-loop
}

TEST_CASE("grid generator fills the lattice when nothing is blocked", "[env][synthetic]") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::grid;
    spec.width = 8;
    spec.height = 6;
    spec.blocked_fraction = 0.0;
    spec.landmark_count = 3;
    spec.target_visible_fraction = 0.5;
    spec.seed = 9;
    const EnvGraph env = gen_synthetic(spec);
    CHECK(env.node_count() == 48);
    std::size_t edge_ends = 0;
    for (NodeId id : env.node_ids()) {
        edge_ends += env.degree(id);
        CHECK(env.degree(id) <= 4);
        const Coord c = env.node(id).coord;
        CHECK(c.x == std::floor(c.x));
        CHECK(c.y == std::floor(c.y));
    }
    CHECK(edge_ends == std::size_t(2 * (2 * 8 * 6 - 8 - 6)));
    CHECK(env.landmarks().size() == 3);
    CHECK_NOTHROW(validate_env(env));
}

TEST_CASE("blocked grids stay connected", "[env][synthetic]") {
    SyntheticSpec spec;
    spec.width = 20;
    spec.height = 20;
    spec.blocked_fraction = 0.2;
    spec.landmark_count = 4;
    spec.target_visible_fraction = 0.4;
    spec.seed = 5;
    const EnvGraph env = gen_synthetic(spec);
    CHECK(env.node_count() <= 400);
    CHECK(env.node_count() >= 200);
    const auto dist = env.bfs_distances(env.node_ids().front());
    CHECK(dist.size() == env.node_count());
    CHECK_NOTHROW(validate_env(env));
}

TEST_CASE("radial generator produces a valid connected graph", "[env][synthetic]") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::radial;
    spec.width = 14;
    spec.height = 14;
    spec.landmark_count = 4;
    spec.target_visible_fraction = 0.5;
    spec.seed = 3;
    const EnvGraph env = gen_synthetic(spec);
    CHECK(env.node_count() > 10);
    const auto dist = env.bfs_distances(env.node_ids().front());
    CHECK(dist.size() == env.node_count());
    CHECK_NOTHROW(validate_env(env));
}

TEST_CASE("generation is deterministic in the seed", "[env][synthetic]") {
    SyntheticSpec spec;
    spec.width = 12;
    spec.height = 12;
    spec.blocked_fraction = 0.1;
    spec.landmark_count = 3;
    spec.target_visible_fraction = 0.4;
    spec.seed = 21;
    CHECK(serialize_env(gen_synthetic(spec)) == serialize_env(gen_synthetic(spec)));
    spec.seed = 22;
    const EnvGraph other = gen_synthetic(spec);
    SyntheticSpec again = spec;
    again.seed = 21;
    CHECK(serialize_env(other) != serialize_env(gen_synthetic(again)));
}

TEST_CASE("visibility radius targets the requested coverage", "[env][synthetic]") {
    // the target counts nodes that see at least one landmark
    auto coverage = [](const EnvGraph& env) {
        std::size_t covered = 0;
        for (NodeId id : env.node_ids()) covered += !env.visible_landmarks(id).empty();
        return double(covered) / double(env.node_count());
    };

    SyntheticSpec spec;
    spec.width = 25;
    spec.height = 25;
    spec.blocked_fraction = 0.0;
    spec.landmark_count = 5;
    spec.target_visible_fraction = 0.4;
    spec.seed = 13;
    CHECK(coverage(gen_synthetic(spec)) == Approx(0.4).margin(0.05));

    spec.width = 40;
    spec.height = 40;
    spec.blocked_fraction = 0.2;
    spec.landmark_count = 6;
    spec.seed = 7;
    const double big = coverage(gen_synthetic(spec));
    CHECK(big >= 0.35);
    CHECK(big <= 0.45);
}
