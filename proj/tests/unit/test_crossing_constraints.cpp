#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sccsurv/crossing_constraints.hpp"
#include "sccsurv/errors.hpp"
#include "sccsurv/hazard_crossing.hpp"

using namespace sccsurv;

namespace {

EventGrid grid_of(std::vector<double> times) {
    EventGrid g;
    g.times = std::move(times);
    for (int a : {0, 1}) {
        g.events[a].assign(g.times.size(), 1);
        g.at_risk[a].assign(g.times.size(), static_cast<int>(g.times.size()) + 1);
    }
    return g;
}

}  // namespace

TEST_CASE("dense rows match the independent construction") {
    const EventGrid g = grid_of({1.0, 2.0, 3.0, 4.0, 5.0});
    for (double theta : {0.0, 0.5, 1.0, 2.5, 4.0, 5.0, 9.0}) {
        for (int gamma : {1, -1}) {
            for (bool hazard : {false, true}) {
                const auto sys = hazard ? build_hazard_constraints(g, {theta, gamma}) : build_constraints(g, {theta, gamma});
                const auto ref = oracle::crossing_rows(g.times, theta, gamma, hazard);
                REQUIRE(sys.row_count() == 15);
                for (std::size_t k = 0; k < 5; ++k) {
                    const auto row = sys.dense_row(k);
                    for (std::size_t i = 0; i < 10; ++i) CHECK(row[i] == ref[k][i]);
                }
                for (std::size_t k = 5; k < 15; ++k) {
                    const auto row = sys.dense_row(k);
                    int nonzero = 0;
                    for (int x : row) nonzero += x != 0;
                    CHECK(nonzero == 1);
                }
            }
        }
    }
}

TEST_CASE("v index and parameter validation") {
    const EventGrid g = grid_of({1.0, 2.0, 3.0});
    CHECK(v_index(0.0, g) == 0);
    CHECK(v_index(0.99, g) == 0);
    CHECK(v_index(1.0, g) == 1);
    CHECK(v_index(2.5, g) == 2);
    CHECK(v_index(7.0, g) == 3);
    CHECK_THROWS_AS(build_constraints(g, {-1.0, 1}), InputError);
    CHECK_THROWS_AS(build_constraints(g, {1.0, 0}), InputError);
}

TEST_CASE("zero is feasible for every system") {
    const EventGrid g = grid_of({0.5, 1.0, 2.0, 3.0});
    const std::vector<double> zero(4, 0.0);
    for (double theta : {0.0, 0.5, 1.5, 3.0}) {
        for (int gamma : {1, -1}) {
            CHECK(build_constraints(g, {theta, gamma}).min_slack(zero, zero) == 0.0);
            CHECK(build_hazard_constraints(g, {theta, gamma}).min_slack(zero, zero) == 0.0);
        }
    }
}

TEST_CASE("constraints are constant within a grid cell") {
    const EventGrid g = grid_of({1.0, 2.0, 4.0});
    std::mt19937_64 gen(9);
    for (std::size_t j = 0; j < 3; ++j) {
        const double lo = g.times[j];
        const double hi = j + 1 < 3 ? g.times[j + 1] : 10.0;
        std::uniform_real_distribution<double> cell(lo, hi);
        for (int gamma : {1, -1}) {
            const auto ref = build_constraints(g, {lo, gamma}).signs();
            for (int k = 0; k < 20; ++k) CHECK(build_constraints(g, {cell(gen), gamma}).signs() == ref);
        }
    }
}

TEST_CASE("feasible points give single-crossing curves and infeasible ones do not") {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const EventGrid g = grid_of({1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    int feasible = 0;
    int infeasible = 0;
    for (int rep = 0; rep < 4000; ++rep) {
        const CrossingParams p{std::floor(unit(gen) * 7.0), unit(gen) < 0.5 ? 1 : -1};
        std::vector<double> u0(6), u1(6);
        for (std::size_t j = 0; j < 6; ++j) {
            u0[j] = -0.4 * unit(gen);
            u1[j] = -0.4 * unit(gen);
        }
        const auto sys = build_constraints(g, p);
        const bool in_cone = sys.min_slack(u0, u1) >= 0.0;
        const auto s0 = StepSurvival::from_logjumps(g.times, u0);
        const auto s1 = StepSurvival::from_logjumps(g.times, u1);
        CHECK(in_cone == check_single_crossing(s0, s1, p, 0.0));
        (in_cone ? feasible : infeasible) += 1;
    }
    CHECK(feasible > 50);
    CHECK(infeasible > 50);
}

TEST_CASE("check_single_crossing rejects mismatched grids") {
    const auto a = StepSurvival::from_values({1.0, 2.0}, {0.9, 0.8});
    const auto b = StepSurvival::from_values({1.0, 3.0}, {0.9, 0.8});
    CHECK_THROWS_AS(check_single_crossing(a, b, {0.0, 1}, 0.0), GridMismatchError);
}
