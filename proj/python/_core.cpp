#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sccsurv/errors.hpp"
#include "sccsurv/estimands.hpp"
#include "sccsurv/hazard_crossing.hpp"
#include "sccsurv/inference.hpp"
#include "sccsurv/profile_search.hpp"
#include "sccsurv/survival_data.hpp"

namespace py = pybind11;
using namespace sccsurv;

namespace {

Cohort make_cohort(const std::vector<double>& times, const std::vector<bool>& events, const std::vector<int>& arms) {
    if (times.size() != events.size() || times.size() != arms.size()) {
        throw InputError("times, events and arms must have the same length");
    }
    std::vector<Subject> subjects(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) subjects[i] = {times[i], events[i], arms[i]};
    return Cohort(std::move(subjects));
}

SolverOptions solver_options(double tol, int max_iter, int threads) { return {tol, max_iter, threads}; }

py::list profile_list(const SccFit& fit) {
    py::list out;
    for (const auto& e : fit.profile) out.append(py::make_tuple(e.theta, e.gamma, e.loglik));
    return out;
}

py::dict report_dict(const EstimandReport& r) {
    py::dict out;
    for (const auto& [k, v] : r.values) out[py::str(k)] = v;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Two-arm survival curves under a single-crossing constraint";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<SolverFailureError>(m, "SolverFailureError", base.ptr());
    py::register_exception<ZeroSurvivalError>(m, "ZeroSurvivalError", base.ptr());
    py::register_exception<InfeasibleConstraintsError>(m, "InfeasibleConstraintsError", base.ptr());

    py::class_<Cohort>(m, "Cohort")
        .def(py::init(&make_cohort), py::arg("times"), py::arg("events"), py::arg("arms"))
        .def_static("read_csv", &read_cohort_csv_file, py::arg("path"))
        .def("__len__", &Cohort::size)
        .def("arm_size", &Cohort::arm_size, py::arg("arm"))
        .def("arm_events", &Cohort::arm_events, py::arg("arm"))
        .def_property_readonly("times", [](const Cohort& c) {
            std::vector<double> v;
            for (const auto& s : c.subjects()) v.push_back(s.time);
            return v;
        })
        .def_property_readonly("events", [](const Cohort& c) {
            std::vector<bool> v;
            for (const auto& s : c.subjects()) v.push_back(s.event);
            return v;
        })
        .def_property_readonly("arms", [](const Cohort& c) {
            std::vector<int> v;
            for (const auto& s : c.subjects()) v.push_back(s.arm);
            return v;
        })
        .def("binned", &bin_followup, py::arg("width"));

    py::class_<StepSurvival>(m, "StepSurvival")
        .def_static("from_values", &StepSurvival::from_values, py::arg("times"), py::arg("values"))
        .def_static("from_logjumps", [](std::vector<double> times, const std::vector<double>& u) {
            return StepSurvival::from_logjumps(std::move(times), u);
        }, py::arg("times"), py::arg("logjumps"))
        .def_property_readonly("times", &StepSurvival::times)
        .def_property_readonly("values", &StepSurvival::values)
        .def("logjumps", &StepSurvival::logjumps)
        .def("__call__", &StepSurvival::operator(), py::arg("t"))
        .def("__len__", &StepSurvival::size)
        .def("integral", &StepSurvival::integral, py::arg("a"), py::arg("b"));

    py::class_<DiscreteHazards>(m, "DiscreteHazards")
        .def_readonly("times", &DiscreteHazards::times)
        .def_readonly("h0", &DiscreteHazards::h0)
        .def_readonly("h1", &DiscreteHazards::h1);

    py::class_<SmoothedHazards>(m, "SmoothedHazards")
        .def_readonly("times", &SmoothedHazards::times)
        .def_readonly("h0", &SmoothedHazards::h0)
        .def_readonly("h1", &SmoothedHazards::h1)
        .def_readonly("single_crossing", &SmoothedHazards::single_crossing)
        .def_readonly("first_violation", &SmoothedHazards::first_violation);

    py::class_<SccFit>(m, "SccFit")
        .def_property_readonly("kind", [](const SccFit& f) {
            return f.kind == ConstraintKind::survival ? "survival" : "hazard";
        })
        .def_readonly("theta_hat", &SccFit::theta_hat)
        .def_readonly("gamma_hat", &SccFit::gamma_hat)
        .def_readonly("loglik", &SccFit::loglik)
        .def_readonly("s0", &SccFit::s0)
        .def_readonly("s1", &SccFit::s1)
        .def_property_readonly("times", [](const SccFit& f) { return f.grid.times; })
        .def_property_readonly("u0", [](const SccFit& f) { return f.fit.u0; })
        .def_property_readonly("u1", [](const SccFit& f) { return f.fit.u1; })
        .def_property_readonly("profile", &profile_list)
        .def("hazards", &DiscreteHazards::from_fit);

    m.def(
        "scc_fit",
        [](const Cohort& c, double tol, int max_iter, int threads) {
            return scc_fit(c, solver_options(tol, max_iter, threads));
        },
        py::arg("cohort"), py::arg("tol") = 1e-7, py::arg("max_iter") = 500, py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "scc_hazard_fit",
        [](const Cohort& c, double tol, int max_iter, int threads) {
            return scc_hazard_fit(c, solver_options(tol, max_iter, threads));
        },
        py::arg("cohort"), py::arg("tol") = 1e-7, py::arg("max_iter") = 500, py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "kaplan_meier", [](const Cohort& c, int arm) { return kaplan_meier(build_event_grid(c), arm); },
        py::arg("cohort"), py::arg("arm"));

    m.def("rmst", &rmst, py::arg("s"), py::arg("tau"));
    m.def("rrml", &rrml, py::arg("s"), py::arg("t"), py::arg("tau"));
    m.def("conditional_survival", &conditional_survival, py::arg("s"), py::arg("theta"), py::arg("t"));
    m.def("milestone_diff", &milestone_diff, py::arg("s1"), py::arg("s0"), py::arg("tstar"));
    m.def("surv_at_crossing", &surv_at_crossing, py::arg("fit"));
    m.def("avg_hazard_ratios", &avg_hazard_ratios, py::arg("hazards"), py::arg("theta_hat"));
    m.def("smooth_hazards", &smooth_hazards, py::arg("hazards"), py::arg("span") = 2.0 / 3.0,
          py::arg("points") = 200);
    m.def(
        "estimands",
        [](const SccFit& fit, std::optional<double> tau, std::vector<double> milestones) {
            EstimandOptions opts;
            opts.tau = tau;
            opts.milestones = std::move(milestones);
            return report_dict(compute_estimands(fit, opts));
        },
        py::arg("fit"), py::arg("tau") = py::none(), py::arg("milestones") = std::vector<double>{});

    m.def(
        "bootstrap",
        [](const Cohort& c, const std::string& statistic, int B, double level, std::uint64_t seed, int threads) {
            const auto stat = parse_statistic(statistic);
            BootstrapResult r;
            {
                py::gil_scoped_release release;
                r = stratified_bootstrap(c, stat.on_cohort, B, level, seed, threads, stat.id);
            }
            py::dict out;
            out["estimand"] = r.estimand;
            out["point"] = r.point;
            out["ci_lower"] = r.ci_lower;
            out["ci_upper"] = r.ci_upper;
            out["replicates"] = r.replicates;
            out["failures"] = r.failures;
            out["warnings"] = r.warnings;
            return out;
        },
        py::arg("cohort"), py::arg("statistic"), py::arg("B"), py::arg("level"), py::arg("seed"),
        py::arg("threads") = 1);

    m.def(
        "permutation_test",
        [](const Cohort& c, const std::vector<std::string>& statistics, const std::vector<std::string>& directions,
           int B, std::uint64_t seed, int threads) {
            std::vector<NamedStatistic> stats;
            for (const auto& s : statistics) stats.push_back(parse_statistic(s));
            std::vector<Direction> dirs;
            for (const auto& d : directions) dirs.push_back(parse_direction(d));
            PermutationResult r;
            {
                py::gil_scoped_release release;
                r = permutation_test(c, combine_statistics(stats), dirs, B, seed, threads);
            }
            py::dict out;
            out["observed"] = r.observed;
            out["p_value"] = r.p_value;
            out["extreme"] = r.extreme;
            out["failures"] = r.failures;
            return out;
        },
        py::arg("cohort"), py::arg("statistics"), py::arg("directions"), py::arg("B"), py::arg("seed"),
        py::arg("threads") = 1);

    m.def(
        "joint_test",
        [](const Cohort& c, const std::string& kind, const std::string& phi, double phi_star, double threshold, int B,
           double level, std::uint64_t seed, int threads) {
            const auto stat = parse_statistic(phi);
            if (kind != "theta" && kind != "surv") throw InputError("joint test kind must be 'theta' or 'surv'");
            JointTestResult r;
            {
                py::gil_scoped_release release;
                r = kind == "theta" ? joint_test_theta(c, stat.on_fit, phi_star, threshold, B, level, seed, {}, threads)
                                    : joint_test_surv(c, stat.on_fit, phi_star, threshold, B, level, seed, {}, threads);
            }
            py::dict out;
            out["eta"] = r.eta;
            out["ci_lower"] = r.ci_lower;
            out["reject"] = r.reject;
            out["failures"] = r.failures;
            return out;
        },
        py::arg("cohort"), py::arg("kind"), py::arg("phi"), py::arg("phi_star"), py::arg("threshold"), py::arg("B"),
        py::arg("level"), py::arg("seed"), py::arg("threads") = 1);
}
