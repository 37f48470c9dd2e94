#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sccsurv/constrained_mle.hpp"
#include "sccsurv/estimands.hpp"
#include "sccsurv/rng.hpp"
#include "sccsurv/survival_data.hpp"

namespace sccsurv {

// Piecewise-constant hazard: rates[k] applies on [breakpoints[k-1], breakpoints[k])
// with an implicit first breakpoint at 0 and the last rate continuing forever.
struct PiecewiseExp {
    std::vector<double> breakpoints;
    std::vector<double> rates;

    // Throws InputError unless rates.size() == breakpoints.size() + 1, all
    // rates are positive and breakpoints are positive and increasing.
    void validate() const;
    double cumulative_hazard(double t) const;
    // Smallest t with cumulative_hazard(t) = h.
    double inverse_cumulative_hazard(double h) const;
    // Integral of the survival function over [a, b].
    double integral(double a, double b) const;
};

double pwexp_survival(const PiecewiseExp& dist, double t);

// Inverse transform on the cumulative hazard.
double sample(const PiecewiseExp& dist, Philox& rng);

// Times in (0, horizon] where S_1 - S_0 changes sign.
std::vector<double> survival_crossings(const PiecewiseExp& dist0, const PiecewiseExp& dist1, double horizon);

struct Censoring {
    bool uniform = true;  // false: no censoring
    double lo = 4.0;
    double hi = 8.0;
};

struct ScenarioSpec {
    std::string label;
    std::string note;
    PiecewiseExp dist0;
    PiecewiseExp dist1;
    Censoring censoring;
    double horizon = 8.0;     // crossings are located on (0, horizon]
    bool single_crossing = true;  // false when the arms cross more than once
    double true_theta = 0.0;
    int true_gamma = 1;
};

// Builds a scenario and derives (theta, gamma) from the analytic crossing.
// A declared theta must agree with it to 1e-9 (InputError otherwise); with
// two or more crossings the scenario is flagged and theta is undefined.
ScenarioSpec make_scenario(std::string label, PiecewiseExp dist0, PiecewiseExp dist1, Censoring censoring,
                           double horizon, std::optional<double> declared_theta = std::nullopt,
                           std::optional<int> declared_gamma = std::nullopt);

// Analytic estimands in the layout of compute_estimands. Crossing-dependent
// entries are omitted for multi-crossing scenarios.
EstimandReport true_estimands(const ScenarioSpec& spec, double tau, const std::vector<double>& milestones = {});

// n / 2 control subjects followed by n - n / 2 treated subjects.
Cohort simulate_cohort(const ScenarioSpec& spec, std::size_t n, Philox& rng);

struct StudyConfig {
    std::vector<ScenarioSpec> scenarios;
    std::vector<std::size_t> ns{200, 400, 800};
    int reps = 200;
    std::uint64_t seed = 20240501;
    double tau = 7.0;
    std::vector<double> milestones{2.0, 4.0};
    std::optional<double> bin_width;  // applied to every simulated cohort before fitting
    SolverOptions solver;
    int threads = 1;
    std::vector<std::string> sources;  // files the configuration was read from
};

struct MseCell {
    std::string parameter;
    bool crossing_dependent = false;
    std::optional<double> scc;  // absent when undefined for the scenario
    std::optional<double> km;   // absent for parameters without a KM analogue
};

struct MseRow {
    std::string scenario;
    std::size_t n = 0;
    int reps = 0;
    int failures = 0;
    double event_fraction = 0.0;
    std::vector<MseCell> cells;

    const MseCell* find(const std::string& parameter) const;
};

struct ReplicateRecord {
    std::string scenario;
    std::size_t scenario_index = 0;
    std::size_t n = 0;
    int rep = 0;
    bool ok = false;
    std::string error;
    double event_fraction = 0.0;
    std::vector<double> scc;  // per parameter, NaN when undefined
    std::vector<double> km;   // per parameter, NaN when undefined
};

struct MseTable {
    std::vector<std::string> parameters;
    std::vector<MseRow> rows;
    std::vector<ReplicateRecord> replicates;
    std::vector<EstimandReport> truths;  // one per scenario

    const MseRow* find(const std::string& scenario, std::size_t n) const;
};

// Parameter names of the study: rmst_diff(tau), milestone_diff(t) per
// milestone, theta, surv_at_crossing, rrml_diff(tau).
std::vector<std::string> study_parameters(const StudyConfig& config);

MseTable run_mse_study(const StudyConfig& config);

// One row per (scenario, n); NA marks undefined cells.
void write_mse_csv(std::ostream& out, const MseTable& table);
void write_replicate_log(std::ostream& out, const MseTable& table);

// YAML study file. Scenario entries are inline maps or paths relative to the
// file; a file with top-level arm0/arm1 is a single-scenario study.
StudyConfig load_study_config(const std::string& path);
ScenarioSpec load_scenario_file(const std::string& path);

}  // namespace sccsurv
