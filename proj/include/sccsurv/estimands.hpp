#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sccsurv/hazard_crossing.hpp"
#include "sccsurv/profile_search.hpp"
#include "sccsurv/survival_data.hpp"

namespace sccsurv {

// S_1(t*) - S_0(t*), right-continuous.
double milestone_diff(const StepSurvival& s1, const StepSurvival& s0, double tstar);

// {S_1(theta_hat) + S_0(theta_hat)} / 2; exactly 1 when theta_hat = 0.
double surv_at_crossing(const SccFit& fit);

// Area under the step curve on [0, tau]. Past the last grid time the curve is
// flat; see beyond_support.
double rmst(const StepSurvival& s, double tau);

// True when tau lies past the last grid time, i.e. rmst extrapolates the tail.
bool beyond_support(const StepSurvival& s, double tau);

// int_t^tau S(u) du / S(t) for 0 <= t <= tau. Throws ZeroSurvivalError when
// S(t) <= exp(-kZeroSurvivalCap).
double rrml(const StepSurvival& s, double t, double tau);

// S(t) / S(theta) for t >= theta. Throws ZeroSurvivalError when S(theta) is zero.
double conditional_survival(const StepSurvival& s, double theta, double t);

// Treatment-to-total average hazard ratios before and after theta_hat, with
// tau = t_m. Terms with h_j0 + h_j1 = 0 contribute 0. Throws
// CrossingOutOfRangeError unless 0 < theta_hat < t_m.
std::pair<double, double> avg_hazard_ratios(const DiscreteHazards& h, double theta_hat);

struct EstimandOptions {
    std::optional<double> tau;       // defaults to t_m
    std::vector<double> milestones;  // milestone and conditional-survival times
    // Hazards (and their crossing time) for the average hazard ratios; the
    // survival fit's own hazards are used when absent.
    std::optional<DiscreteHazards> hazards;
    std::optional<double> hazard_theta;
};

struct EstimandReport {
    double theta_hat = 0.0;
    int gamma_hat = 1;
    double tau = 0.0;
    std::vector<std::pair<std::string, double>> values;  // in report order
    std::vector<std::string> warnings;

    std::optional<double> get(const std::string& key) const;
};

// Identifier formatting used in reports, e.g. key("rmst_diff", 36) = "rmst_diff(36)".
std::string estimand_key(const std::string& name, double arg);

EstimandReport compute_estimands(const SccFit& fit, const EstimandOptions& opts = {});

// Flat JSON object: theta_hat, gamma_hat, tau, every estimand, warnings.
std::string report_to_json(const EstimandReport& report);
// Rows `parameter,estimate`.
void write_report_csv(std::ostream& out, const EstimandReport& report);

}  // namespace sccsurv
