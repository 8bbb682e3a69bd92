#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "citynav/spatial.hpp"

using namespace citynav;
using Catch::Approx;

TEST_CASE("splitmix64 stream is stable", "[rng]") {
    Rng rng(42);
    CHECK(rng.next() == 13679457532755275413ULL);
    CHECK(rng.next() == 2949826092126892291ULL);
    CHECK(rng.next() == 5139283748462763858ULL);
}

TEST_CASE("rng fork yields independent streams", "[rng]") {
    Rng rng(7);
    Rng a = rng.fork(1);
    Rng b = rng.fork(2);
    CHECK(a.next() != b.next());
    // forking does not advance the parent
    Rng again(7);
    CHECK(rng.next() == again.next());
}

TEST_CASE("uniform01 stays in the half-open unit interval", "[rng]") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("uniform_int respects its bound", "[rng]") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) CHECK(rng.uniform_int(7) < 7);
    CHECK(rng.uniform_int(0) == 0);
}

TEST_CASE("normal and lognormal have the right centers", "[rng]") {
    Rng rng(11);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sum2 += v * v;
    }
    CHECK(sum / n == Approx(0.0).margin(0.03));
    CHECK(sum2 / n == Approx(1.0).margin(0.05));

    // exp(N(0, sigma)) has median 1
    std::vector<double> factors;
    for (int i = 0; i < 5001; ++i) factors.push_back(rng.lognormal_factor(0.2));
    std::nth_element(factors.begin(), factors.begin() + 2500, factors.end());
    CHECK(factors[2500] == Approx(1.0).margin(0.02));
}

TEST_CASE("hash helpers are stable across runs", "[rng]") {
    CHECK(fnv1a64("t0001") == 10680781796762203410ULL);
    CHECK(mix64(1, 2) == 11812867941337419652ULL);
    CHECK(mix64(1, 2) != mix64(2, 1));
}

TEST_CASE("bearing is measured clockwise from north", "[geometry]") {
    CHECK(rel_pos({0, 0}, {0, 1}).bearing_deg == Approx(0.0));
    CHECK(rel_pos({0, 0}, {1, 0}).bearing_deg == Approx(90.0));
    CHECK(rel_pos({0, 0}, {0, -1}).bearing_deg == Approx(180.0));
    CHECK(rel_pos({0, 0}, {-1, 0}).bearing_deg == Approx(270.0));
    CHECK(rel_pos({0, 0}, {1, 1}).bearing_deg == Approx(45.0));
}

TEST_CASE("rel_pos scales distance by the step length", "[geometry]") {
    const RelPos r = rel_pos({0, 0}, {3, 4});
    CHECK(r.distance_m == Approx(250.0));
    CHECK(rel_pos({2, 2}, {2, 2}).bearing_deg == 0.0);
    CHECK(rel_pos({2, 2}, {2, 2}).distance_m == 0.0);
}

TEST_CASE("southeast goal offset from a worked description", "[geometry]") {
    const RelPos r = rel_pos({0, 0}, {34, -43});
    CHECK(r.bearing_deg == Approx(141.66665989090137).epsilon(1e-12));
    CHECK(r.distance_m == Approx(2740.8940147331491).epsilon(1e-12));
    const CompassLabel label = classify_direction({34, -43});
    CHECK(label.octant == 3);
    REQUIRE(label.qualifier.has_value());
    CHECK(*label.qualifier == 4);
    CHECK(compass_phrase(label) == "Southeast (more towards south)");
}

TEST_CASE("normalize_bearing wraps into [0,360)", "[geometry]") {
    CHECK(normalize_bearing(360.0) == 0.0);
    CHECK(normalize_bearing(-90.0) == Approx(270.0));
    CHECK(normalize_bearing(725.0) == Approx(5.0));
}

TEST_CASE("octant boundaries sit at 22.5 degrees", "[geometry]") {
    CHECK(octant_of(0.0) == 0);
    CHECK(octant_of(22.4) == 0);
    CHECK(octant_of(22.5) == 1);
    CHECK(octant_of(337.5) == 0);
    CHECK(octant_of(337.4) == 7);
    CHECK(octant_of(180.0) == 4);
    for (int k = 0; k < 8; ++k) CHECK(octant_of(octant_center(k)) == k);
}

TEST_CASE("signed_angle_diff picks the short way around", "[geometry]") {
    CHECK(signed_angle_diff(350.0, 10.0) == Approx(-20.0));
    CHECK(signed_angle_diff(10.0, 350.0) == Approx(20.0));
    CHECK(signed_angle_diff(90.0, 45.0) == Approx(45.0));
    CHECK(signed_angle_diff(45.0, 90.0) == Approx(-45.0));
    CHECK(signed_angle_diff(0.0, 180.0) == Approx(180.0));
}

TEST_CASE("rel_to_steps inverts rel_pos", "[geometry]") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const Coord from{rng.uniform(-50, 50), rng.uniform(-50, 50)};
        const Coord to{rng.uniform(-50, 50), rng.uniform(-50, 50)};
        const Coord d = rel_to_steps(rel_pos(from, to));
        CHECK(d.x == Approx(to.x - from.x).margin(1e-9));
        CHECK(d.y == Approx(to.y - from.y).margin(1e-9));
    }
}

TEST_CASE("triangulation composes the two legs", "[geometry]") {
    const RelPos g = triangulate_goal({90.0, 1000.0}, {45.0, 300.0});
    CHECK(g.bearing_deg == Approx(80.073345004210466).epsilon(1e-12));
    CHECK(g.distance_m == Approx(1230.5543745450375).epsilon(1e-12));

    // law-of-cosines cross-check with the angle taken at the landmark
    const double lc = std::sqrt(1000.0 * 1000.0 + 300.0 * 300.0 +
                                2.0 * 1000.0 * 300.0 * std::cos((45.0 - 90.0) * M_PI / 180.0));
    CHECK(g.distance_m == Approx(lc).epsilon(1e-12));

    SECTION("collinear legs add") {
        const RelPos sum = triangulate_goal({90.0, 500.0}, {90.0, 500.0});
        CHECK(sum.bearing_deg == Approx(90.0));
        CHECK(sum.distance_m == Approx(1000.0));
    }
    SECTION("opposed legs cancel") {
        const RelPos zero = triangulate_goal({90.0, 500.0}, {270.0, 500.0});
        CHECK(zero.distance_m == Approx(0.0).margin(1e-9));
    }
}

TEST_CASE("round_half_away rounds halves away from zero", "[geometry]") {
    CHECK(round_half_away(0.5) == 1.0);
    CHECK(round_half_away(-0.5) == -1.0);
    CHECK(round_half_away(1.5) == 2.0);
    CHECK(round_half_away(-25.5) == -26.0);
    CHECK(round_half_away(2.4) == 2.0);
}

namespace {

std::vector<GoalEstimate> estimates(const std::vector<Coord>& coords) {
    std::vector<GoalEstimate> out;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        out.push_back({coords[i], GoalEstimate::Source::perceived, int(i)});
    }
    return out;
}

} // namespace

TEST_CASE("fusion keeps the largest cluster of estimates", "[fusion]") {
    const Coord fused = fuse_estimates(estimates({{54, -26}, {58, -25}, {19, -24}, {22, -5}}));
    CHECK(fused.x == 56.0);
    CHECK(fused.y == -26.0);
}

TEST_CASE("fusion of a single estimate is that estimate", "[fusion]") {
    const Coord fused = fuse_estimates(estimates({{7, -3}}));
    CHECK(fused.x == 7.0);
    CHECK(fused.y == -3.0);
}

TEST_CASE("fusion is invariant to history order", "[fusion]") {
    std::vector<Coord> coords{{54, -26}, {58, -25}, {19, -24}, {22, -5}, {55, -27}};
    std::sort(coords.begin(), coords.end(), [](Coord a, Coord b) { return a.x < b.x; });
    const Coord base = fuse_estimates(estimates(coords));
    do {
        CHECK(fuse_estimates(estimates(coords)) == base);
    } while (std::next_permutation(coords.begin(), coords.end(),
                                   [](Coord a, Coord b) { return a.x < b.x; }));
}

TEST_CASE("equal-size clusters resolve toward the most recent", "[fusion]") {
    // two 2-cliques far apart; the one holding the latest estimate wins
    const Coord fused = fuse_estimates(estimates({{0, 0}, {1, 0}, {100, 0}, {101, 0}}));
    CHECK(fused.x == Approx(100.5).margin(0.51)); // mean of {100,101} then rounded
    CHECK(fused.x == 101.0);                      // 100.5 rounds away from zero
    CHECK(fused.y == 0.0);
}

TEST_CASE("fusion result stays inside the estimate bounding box", "[fusion]") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Coord> coords;
        const int n = 1 + int(rng.uniform_int(8));
        double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
        for (int i = 0; i < n; ++i) {
            Coord c{std::floor(rng.uniform(-40, 40)), std::floor(rng.uniform(-40, 40))};
            lo_x = std::min(lo_x, c.x);
            hi_x = std::max(hi_x, c.x);
            lo_y = std::min(lo_y, c.y);
            hi_y = std::max(hi_y, c.y);
            coords.push_back(c);
        }
        const Coord fused = fuse_estimates(estimates(coords));
        CHECK(fused.x >= lo_x);
        CHECK(fused.x <= hi_x);
        CHECK(fused.y >= lo_y);
        CHECK(fused.y <= hi_y);
    }
}

TEST_CASE("fusion handles long histories of identical estimates", "[fusion]") {
    // identical estimates form a complete agreement graph; this must not blow up
    std::vector<Coord> coords(150, Coord{12, -7});
    const Coord fused = fuse_estimates(estimates(coords));
    CHECK(fused.x == 12.0);
    CHECK(fused.y == -7.0);
}

TEST_CASE("fusion rejects an empty history", "[fusion]") {
    CHECK_THROWS_AS(fuse_estimates({}), std::invalid_argument);
}

TEST_CASE("anticipation carries the last fused coordinate forward", "[fusion]") {
    const GoalEstimate g = anticipate_goal({5, -9}, {2, 2}, 14);
    CHECK(g.coord == Coord{5, -9});
    CHECK(g.source == GoalEstimate::Source::anticipated);
    CHECK(g.step == 14);
    CHECK(std::string(source_name(g.source)) == "anticipated");
}
