#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sccsurv/errors.hpp"
#include "sccsurv/estimands.hpp"
#include "sccsurv/inference.hpp"

using namespace sccsurv;

TEST_CASE("Philox4x32-10 known-answer vectors") {
    using B = Philox::Block;
    CHECK(Philox::block(B{0, 0, 0, 0}, {0, 0}) == B{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox::block(B{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
          B{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox::block(B{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
          B{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("Philox substreams are reproducible and distinct") {
    Philox a(42, stream_id(StreamTag::bootstrap, 3));
    Philox b(42, stream_id(StreamTag::bootstrap, 3));
    Philox c(42, stream_id(StreamTag::bootstrap, 4));
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        CHECK(x == b());
        differs = differs || x != c();
    }
    CHECK(differs);
    Philox r(7, 0);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) ++counts[r.below(5)];
    for (int k : counts) CHECK(std::abs(k - 10000) < 500);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform_open();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("type-7 quantiles") {
    const std::vector<double> x{1.0, 2.0, 4.0, 8.0};
    CHECK(quantile_type7(x, 0.0) == 1.0);
    CHECK(quantile_type7(x, 1.0) == 8.0);
    CHECK(quantile_type7(x, 0.5) == 3.0);
    CHECK(quantile_type7(x, 0.25) == Catch::Approx(1.75));
    CHECK(quantile_type7({5.0}, 0.3) == 5.0);
    CHECK_THROWS_AS(quantile_type7({}, 0.5), InputError);
    CHECK_THROWS_AS(quantile_type7(x, 1.5), InputError);
}

TEST_CASE("stratified resampling keeps arm sizes and permutation keeps arm counts") {
    std::mt19937_64 gen(1);
    const Cohort c = oracle::random_cohort(gen, 13, 21, 0.3, 0.2, 8.0, 3);
    Philox rng(5, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const Cohort b = resample_stratified(c, rng);
        CHECK(b.arm_size(0) == 13);
        CHECK(b.arm_size(1) == 21);
        for (const auto& s : b.subjects()) {
            const bool found = std::any_of(c.subjects().begin(), c.subjects().end(), [&](const Subject& o) {
                return o.time == s.time && o.event == s.event && o.arm == s.arm;
            });
            CHECK(found);
        }
        const Cohort p = permute_arms(c, rng);
        CHECK(p.arm_size(0) == 13);
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(p.subjects()[i].time == c.subjects()[i].time);
    }
}

TEST_CASE("bootstrap percentile interval equals the order statistics") {
    std::mt19937_64 gen(2);
    const Cohort c = oracle::random_cohort(gen, 40, 40, 0.3, 0.2, 8.0, 2);
    const auto stat = parse_statistic("km_rmst_diff:5");
    const auto r = stratified_bootstrap(c, stat.on_cohort, 199, 0.9, 11, 1, stat.id);
    REQUIRE(r.replicates.size() == 199);
    std::vector<double> sorted = r.replicates;
    std::sort(sorted.begin(), sorted.end());
    // (n - 1) p = 198 * 0.05 = 9.9 and 198 * 0.95 = 188.1.
    CHECK(r.ci_lower == Catch::Approx(sorted[9] + 0.9 * (sorted[10] - sorted[9])).epsilon(1e-14));
    CHECK(r.ci_upper == Catch::Approx(sorted[188] + 0.1 * (sorted[189] - sorted[188])).epsilon(1e-14));
    CHECK(r.point == stat.on_cohort(c));
    CHECK(r.failures == 0);
    CHECK(r.warnings.empty());
}

TEST_CASE("bootstrap and permutation results do not depend on threads") {
    std::mt19937_64 gen(3);
    const Cohort c = oracle::random_cohort(gen, 25, 25, 0.3, 0.2, 8.0, 2);
    const auto stat = parse_statistic("rmst_diff:4");
    const auto a = stratified_bootstrap(c, stat.on_cohort, 30, 0.95, 5, 1);
    const auto b = stratified_bootstrap(c, stat.on_cohort, 30, 0.95, 5, 3);
    CHECK(a.replicates == b.replicates);
    const auto comb = combine_statistics({parse_statistic("rmst_diff:4"), parse_statistic("theta")});
    const std::vector<Direction> dirs{Direction::greater, Direction::two_sided};
    const auto p1 = permutation_test(c, comb, dirs, 30, 9, 1);
    const auto p2 = permutation_test(c, comb, dirs, 30, 9, 4);
    CHECK(p1.p_value == p2.p_value);
    CHECK(p1.extreme == p2.extreme);
}

TEST_CASE("failed replicates are excluded and counted") {
    // Arm 1 has a single event, so many resamples contain no arm-1 event.
    std::vector<Subject> s;
    for (int i = 0; i < 10; ++i) s.push_back({1.0 + i, true, 0});
    s.push_back({2.5, true, 1});
    for (int i = 0; i < 9; ++i) s.push_back({3.0 + i, false, 1});
    const Cohort c(s);
    const auto stat = parse_statistic("rmst_diff:5");
    const auto r = stratified_bootstrap(c, stat.on_cohort, 100, 0.95, 1);
    CHECK(r.failures > 1);
    CHECK(r.replicates.size() == static_cast<std::size_t>(100 - r.failures));
    CHECK(r.warnings.size() == 1);
}

TEST_CASE("joint tests reject exactly when the lower bound is positive") {
    std::mt19937_64 gen(4);
    const Cohort c = oracle::random_cohort(gen, 40, 40, 0.4, 0.1, 8.0, 2);
    const auto phi = parse_statistic("rmst_diff:5");
    for (double phi_star : {-1.0, 0.0, 3.0}) {
        const auto t = joint_test_theta(c, phi.on_fit, phi_star, 2.0, 40, 0.9, 3);
        CHECK(t.reject == (t.ci_lower > 0.0));
        std::vector<double> sorted = t.replicates;
        std::sort(sorted.begin(), sorted.end());
        CHECK(t.ci_lower == quantile_type7(sorted, 1.0 - 0.9));
        const auto u = joint_test_surv(c, phi.on_fit, phi_star, 0.3, 40, 0.9, 3);
        CHECK(u.reject == (u.ci_lower > 0.0));
    }
    CHECK_THROWS_AS(joint_test_surv(c, phi.on_fit, 0.0, 1.5, 10, 0.9, 3), InputError);
    CHECK_THROWS_AS(joint_test_theta(c, phi.on_fit, 0.0, -1.0, 10, 0.9, 3), InputError);
}

TEST_CASE("permutation p-value formula and directions") {
    std::mt19937_64 gen(5);
    const Cohort c = oracle::random_cohort(gen, 20, 20, 0.3, 0.3, 8.0, 2);
    const VectorStatistic constant = [](const Cohort&) { return std::vector<double>{1.0}; };
    const auto r = permutation_test(c, constant, {Direction::greater}, 50, 1);
    CHECK(r.extreme == 50);
    CHECK(r.p_value == 1.0);
    CHECK_THROWS_AS(permutation_test(c, constant, {Direction::greater, Direction::less}, 50, 1), InputError);
    CHECK(parse_direction("two-sided") == Direction::two_sided);
    CHECK(std::string(direction_name(Direction::less)) == "less");
    CHECK_THROWS_AS(parse_direction("up"), InputError);
}

TEST_CASE("named statistics") {
    std::mt19937_64 gen(6);
    const Cohort c = oracle::random_cohort(gen, 30, 30, 0.3, 0.15, 8.0, 2);
    const SccFit fit = scc_fit(c);
    CHECK(parse_statistic("rmst_diff:5").on_fit(fit) == rmst(fit.s1, 5.0) - rmst(fit.s0, 5.0));
    CHECK(parse_statistic("theta").on_cohort(c) == fit.theta_hat);
    CHECK(parse_statistic("constant:2.5").on_cohort(c) == 2.5);
    CHECK_FALSE(parse_statistic("km_rmst_diff:5").needs_fit);
    for (const char* bad : {"nope", "rmst_diff", "rmst_diff:x", "milestone_diff:-1"}) {
        INFO(bad);
        CHECK_THROWS_AS(parse_statistic(bad).on_cohort(c), InputError);
    }
    const auto comb = combine_statistics({parse_statistic("rmst_diff:5"), parse_statistic("surv_at_crossing")});
    const auto v = comb(c);
    REQUIRE(v.size() == 2);
    CHECK(v[1] == surv_at_crossing(fit));
}
