#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sccsurv/errors.hpp"
#include "sccsurv/survival_data.hpp"

using namespace sccsurv;

TEST_CASE("event grid from the hand-enumerated example") {
    const Cohort c({{1.0, true, 0}, {2.0, false, 0}, {2.0, true, 1}});
    const EventGrid g = build_event_grid(c);
    REQUIRE(g.times == std::vector<double>{1.0, 2.0});
    CHECK(g.d(0, 0) == 1);
    CHECK(g.d(0, 1) == 0);
    CHECK(g.d(1, 0) == 0);
    CHECK(g.d(1, 1) == 1);
    CHECK(g.r(0, 0) == 2);
    CHECK(g.r(0, 1) == 1);
    CHECK(g.r(1, 0) == 1);
    CHECK(g.r(1, 1) == 1);
}

TEST_CASE("event grid edge cases") {
    const EventGrid two = build_event_grid(Cohort({{1.0, true, 0}, {3.0, true, 1}}));
    CHECK(two.size() == 2);
    CHECK(two.d(0, 0) + two.d(0, 1) == 1);
    CHECK(two.d(1, 0) + two.d(1, 1) == 1);

    const EventGrid tied = build_event_grid(Cohort({{3.0, true, 0}, {3.0, true, 1}}));
    CHECK(tied.size() == 1);
    CHECK(tied.d(0, 0) == 1);
    CHECK(tied.d(0, 1) == 1);

    CHECK_THROWS_AS(build_event_grid(Cohort({{1.0, true, 0}, {2.0, false, 1}})), EmptyArmError);
    CHECK_THROWS_AS(Cohort({{-1.0, true, 0}}), NegativeTimeError);
    CHECK_THROWS_AS(Cohort({{1.0, true, 2}}), InputError);
}

TEST_CASE("risk tables agree with direct indicator sums") {
    std::mt19937_64 gen(3);
    for (int rep = 0; rep < 50; ++rep) {
        const Cohort c = oracle::random_cohort(gen, 25, 30, 0.3, 0.2, 6.0, 1);
        if (c.arm_events(0) == 0 || c.arm_events(1) == 0) continue;
        const EventGrid g = build_event_grid(c);
        const auto t = oracle::tables(c);
        REQUIRE(g.times == t.times);
        for (int a : {0, 1}) {
            int total = 0;
            for (std::size_t j = 0; j < g.size(); ++j) {
                CHECK(g.d(j, a) == t.d[a][j]);
                CHECK(g.r(j, a) == t.r[a][j]);
                CHECK(g.d(j, a) <= g.r(j, a));
                if (j > 0) CHECK(g.r(j, a) <= g.r(j - 1, a));
                total += g.d(j, a);
            }
            CHECK(total == static_cast<int>(c.arm_events(a)));
        }
    }
}

TEST_CASE("Kaplan-Meier examples") {
    const Cohort c({{1.0, true, 0}, {2.0, true, 0}, {3.0, true, 0}, {5.0, true, 1}});
    const EventGrid g = build_event_grid(c);
    const auto km = kaplan_meier(g, 0);
    CHECK(km(1.0) == Catch::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(km(2.0) == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(km(3.0) < 1e-11);
    CHECK(kaplan_meier_logjumps(g, 0)[2] == -kZeroSurvivalCap);

    const Cohort flat({{1.0, false, 0}, {2.0, true, 1}, {3.0, true, 1}});
    const auto g2 = EventGrid{{1.0}, {std::vector<int>{0}, std::vector<int>{1}}, {std::vector<int>{3}, std::vector<int>{2}}};
    CHECK(kaplan_meier(g2, 0)(5.0) == 1.0);

    const auto g3 = EventGrid{{1.0}, {std::vector<int>{1}, std::vector<int>{1}}, {std::vector<int>{4}, std::vector<int>{2}}};
    CHECK(kaplan_meier(g3, 0)(1.0) == Catch::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("Kaplan-Meier equals the direct product-limit estimator") {
    std::mt19937_64 gen(17);
    for (int rep = 0; rep < 60; ++rep) {
        const Cohort c = oracle::random_cohort(gen, 40, 35, 0.25, 0.15, 8.0, 1);
        if (c.arm_events(0) == 0 || c.arm_events(1) == 0) continue;
        const EventGrid g = build_event_grid(c);
        for (int a : {0, 1}) {
            const auto km = kaplan_meier(g, a);
            double prev = 1.0;
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double ref = oracle::km_direct(c, a, g.times[j]);
                CHECK(std::abs(km(g.times[j]) - ref) <= 1e-11);
                CHECK(km.values()[j] <= prev);
                prev = km.values()[j];
            }
        }
    }
}

TEST_CASE("bin_followup midpoints, idempotence and errors") {
    const Cohort c({{0.2, true, 0}, {0.7, false, 1}, {1.3, true, 1}, {2.0, true, 0}});
    const Cohort b = bin_followup(c, 1.0);
    CHECK(b.subjects()[0].time == 0.5);
    CHECK(b.subjects()[1].time == 0.5);
    CHECK(b.subjects()[2].time == 1.5);
    CHECK(b.subjects()[3].time == 2.5);
    CHECK(b.subjects()[1].event == false);
    CHECK(b.subjects()[2].arm == 1);

    std::mt19937_64 gen(4);
    for (double w : {0.05, 0.3, 1.0, 2.5}) {
        const Cohort r = oracle::random_cohort(gen, 30, 30, 0.3, 0.2, 8.0, 4);
        const Cohort once = bin_followup(r, w);
        const Cohort twice = bin_followup(once, w);
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(once.subjects()[i].time == twice.subjects()[i].time);
    }

    const Cohort fine({{1.0, true, 0}, {2.0, true, 1}, {3.5, true, 0}});
    CHECK(build_event_grid(bin_followup(fine, 0.1)).size() == 3);

    CHECK_THROWS_AS(bin_followup(c, 0.0), InvalidWidthError);
    CHECK_THROWS_AS(bin_followup(c, -1.0), InvalidWidthError);
}

TEST_CASE("CSV ingestion") {
    std::istringstream ok("time,event,arm\n1.5,1,0\n2,0,1\n3,1,1\n");
    const Cohort c = read_cohort_csv(ok);
    REQUIRE(c.size() == 3);
    CHECK(c.subjects()[0].time == 1.5);
    CHECK(c.subjects()[1].event == false);
    CHECK(c.arm_size(1) == 2);

    for (const char* bad : {"t,e,a\n1,1,0\n", "time,event,arm\n1,2,0\n", "time,event,arm\n1,1,3\n",
                            "time,event,arm\nx,1,0\n", "time,event,arm\n1,1\n", "time,event,arm\n-1,1,0\n"}) {
        std::istringstream in(bad);
        INFO(bad);
        CHECK_THROWS_AS(read_cohort_csv(in), InputError);
    }
    CHECK_THROWS_AS(read_cohort_csv_file("/nonexistent/file.csv"), InputError);
}

TEST_CASE("StepSurvival integrals and round trip") {
    const auto s = StepSurvival::from_logjumps({1.0, 2.0}, std::vector<double>{std::log(0.5), std::log(0.5)});
    CHECK(s(0.5) == 1.0);
    CHECK(s(1.0) == Catch::Approx(0.5));
    CHECK(s(2.0) == Catch::Approx(0.25));
    CHECK(s.integral(0.0, 3.0) == Catch::Approx(1.0 + 0.5 + 0.25));
    CHECK(s.integral(1.5, 2.5) == Catch::Approx(0.25 + 0.125));
    const auto back = StepSurvival::from_values(s.times(), s.values());
    const auto u = back.logjumps();
    CHECK(u[0] == Catch::Approx(std::log(0.5)));
    CHECK(u[1] == Catch::Approx(std::log(0.5)));
}
