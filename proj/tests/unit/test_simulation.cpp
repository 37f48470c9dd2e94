#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "sccsurv/errors.hpp"
#include "sccsurv/simulation.hpp"

using namespace sccsurv;

namespace {

const PiecewiseExp kDist{{1.0, 2.5}, {0.4, 0.1, 0.3}};

double quad_survival(const PiecewiseExp& d, double a, double b) {
    // Integrate piece by piece so the integrand is smooth on each interval.
    std::vector<double> cuts{a};
    for (double bp : d.breakpoints) {
        if (bp > a && bp < b) cuts.push_back(bp);
    }
    cuts.push_back(b);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            [&](double t) { return pwexp_survival(d, t); }, cuts[i], cuts[i + 1], 10, 1e-14);
    }
    return total;
}

std::string config_dir() { return SCCSURV_CONFIG_DIR; }

}  // namespace

TEST_CASE("piecewise exponential cumulative hazard and its inverse") {
    CHECK(kDist.cumulative_hazard(0.5) == Catch::Approx(0.2));
    CHECK(kDist.cumulative_hazard(2.0) == Catch::Approx(0.4 + 0.1));
    CHECK(kDist.cumulative_hazard(3.0) == Catch::Approx(0.4 + 0.15 + 0.15));
    for (double t : {0.0, 0.3, 1.0, 1.7, 2.5, 4.0, 20.0}) {
        CHECK(kDist.inverse_cumulative_hazard(kDist.cumulative_hazard(t)) == Catch::Approx(t).margin(1e-12));
    }
    CHECK(pwexp_survival(kDist, 3.0) == Catch::Approx(std::exp(-0.7)));
    CHECK_THROWS_AS((PiecewiseExp{{1.0}, {0.1}}.validate()), InputError);
    CHECK_THROWS_AS((PiecewiseExp{{2.0, 1.0}, {0.1, 0.2, 0.3}}.validate()), InputError);
    CHECK_THROWS_AS((PiecewiseExp{{}, {-0.1}}.validate()), InputError);
}

TEST_CASE("survival integrals match quadrature") {
    for (auto [a, b] : {std::pair{0.0, 7.0}, {0.5, 2.0}, {1.2, 1.3}, {3.0, 9.0}}) {
        CHECK(std::abs(kDist.integral(a, b) - quad_survival(kDist, a, b)) <= 1e-10);
    }
}

TEST_CASE("sampler passes a Kolmogorov-Smirnov test") {
    Philox rng(2024, 0);
    const std::size_t n = 20000;
    std::vector<double> x(n);
    for (auto& v : x) v = sample(kDist, rng);
    std::sort(x.begin(), x.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double cdf = 1.0 - pwexp_survival(kDist, x[i]);
        d = std::max({d, cdf - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - cdf});
    }
    // Critical value at the 1% level.
    CHECK(d < 1.628 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("crossings and derived scenario parameters") {
    const PiecewiseExp control{{}, {0.2}};
    const PiecewiseExp late{{1.0}, {0.4, 0.05}};
    const auto xs = survival_crossings(control, late, 8.0);
    REQUIRE(xs.size() == 1);
    CHECK(pwexp_survival(control, xs[0]) == Catch::Approx(pwexp_survival(late, xs[0])).margin(1e-12));

    const auto spec = make_scenario("s", control, late, {}, 8.0);
    CHECK(spec.single_crossing);
    CHECK(spec.true_theta == Catch::Approx(xs[0]).margin(1e-9));
    CHECK(spec.true_gamma == 1);
    CHECK_THROWS_AS(make_scenario("s", control, late, {}, 8.0, xs[0] + 0.1), InputError);

    const auto none = make_scenario("n", control, PiecewiseExp{{}, {0.1}}, {}, 8.0);
    CHECK(none.true_theta == 0.0);
    CHECK(none.true_gamma == 1);
}

TEST_CASE("true estimands agree with quadrature") {
    const auto spec = make_scenario("q", PiecewiseExp{{}, {0.2}}, PiecewiseExp{{1.0}, {0.4, 0.05}}, {}, 8.0);
    const double theta = spec.true_theta;
    const auto r = true_estimands(spec, 7.0, {2.0, 4.0});
    const auto& d0 = spec.dist0;
    const auto& d1 = spec.dist1;
    CHECK(std::abs(*r.get("rmst_diff(7)") - (quad_survival(d1, 0, 7) - quad_survival(d0, 0, 7))) <= 1e-8);
    const double rrml = quad_survival(d1, theta, 7) / pwexp_survival(d1, theta) -
                        quad_survival(d0, theta, 7) / pwexp_survival(d0, theta);
    CHECK(std::abs(*r.get("rrml_diff(7)") - rrml) <= 1e-8);
    CHECK(*r.get("milestone_diff(4)") == Catch::Approx(pwexp_survival(d1, 4) - pwexp_survival(d0, 4)));
    CHECK(*r.get("surv_at_crossing") == Catch::Approx(pwexp_survival(d0, theta)));
}

TEST_CASE("simulated cohorts split evenly and respect censoring") {
    const auto spec = make_scenario("c", PiecewiseExp{{}, {0.2}}, PiecewiseExp{{}, {0.1}}, {true, 4.0, 8.0}, 8.0);
    Philox rng(1, 0);
    const Cohort c = simulate_cohort(spec, 101, rng);
    CHECK(c.arm_size(0) == 50);
    CHECK(c.arm_size(1) == 51);
    for (const auto& s : c.subjects()) {
        CHECK(s.time <= 8.0);
        if (!s.event) CHECK(s.time >= 4.0);
    }
}

TEST_CASE("shipped scenarios declare their analytic crossings") {
    const StudyConfig cfg = load_study_config(config_dir() + "/table1.yaml");
    REQUIRE(cfg.scenarios.size() == 6);
    CHECK(cfg.seed == 20240501);
    CHECK(cfg.reps == 200);
    CHECK(cfg.ns == std::vector<std::size_t>{200, 400, 800});
    const std::vector<double> thetas{0.0, 5.0, 2.0, 0.75, 1.5};
    for (std::size_t s = 0; s < 5; ++s) {
        CHECK(cfg.scenarios[s].single_crossing);
        CHECK(cfg.scenarios[s].true_theta == Catch::Approx(thetas[s]).margin(1e-9));
    }
    CHECK_FALSE(cfg.scenarios[5].single_crossing);
    CHECK(survival_crossings(cfg.scenarios[5].dist0, cfg.scenarios[5].dist1, 8.0).size() == 2);
    CHECK(cfg.sources.size() == 7);
}

TEST_CASE("configuration errors are reported as input errors") {
    const auto dir = std::filesystem::temp_directory_path() / "sccsurv_cfg_test";
    std::filesystem::create_directories(dir);
    const auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream(dir / name) << body;
        return (dir / name).string();
    };
    CHECK_THROWS_AS(load_study_config(write("a.yaml", "seed: 1\nbogus: 2\n")), InputError);
    CHECK_THROWS_AS(load_study_config(write("b.yaml", "arm0: {rates: [0.1]}\n")), InputError);
    CHECK_THROWS_AS(load_study_config(write("c.yaml", "scenarios: [missing.yaml]\n")), InputError);
    CHECK_THROWS_AS(load_study_config((dir / "absent.yaml").string()), InputError);
    const auto ok = load_study_config(write("d.yaml", "label: x\narm0: {rates: [0.2]}\narm1: {rates: [0.1]}\n"));
    CHECK(ok.scenarios.size() == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("small study layout and thread independence") {
    StudyConfig cfg;
    cfg.scenarios.push_back(
        make_scenario("late", PiecewiseExp{{}, {0.2}}, PiecewiseExp{{1.0}, {0.4, 0.05}}, {true, 4.0, 8.0}, 8.0));
    cfg.ns = {60};
    cfg.reps = 6;
    cfg.seed = 3;
    const auto a = run_mse_study(cfg);
    cfg.threads = 3;
    const auto b = run_mse_study(cfg);
    std::ostringstream ca, cb, la, lb;
    write_mse_csv(ca, a);
    write_mse_csv(cb, b);
    write_replicate_log(la, a);
    write_replicate_log(lb, b);
    CHECK(ca.str() == cb.str());
    CHECK(la.str() == lb.str());
    CHECK(ca.str().rfind("scenario,n,reps,failures,event_fraction,rmst_diff(7)_scc,rmst_diff(7)_km", 0) == 0);
    const auto* row = a.find("late", 60);
    REQUIRE(row);
    CHECK(row->reps == 6);
    REQUIRE(row->find("theta"));
    CHECK_FALSE(row->find("theta")->km);
    CHECK(row->find("rmst_diff(7)")->km);
}
