#include "sccsurv/estimands.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include <json.hpp>

#include "sccsurv/errors.hpp"

namespace sccsurv {

namespace {

const double kZeroSurvival = std::exp(-kZeroSurvivalCap);

}  // namespace

double milestone_diff(const StepSurvival& s1, const StepSurvival& s0, double tstar) {
    if (!(tstar >= 0.0)) throw InputError("milestone time must be non-negative");
    return s1(tstar) - s0(tstar);
}

double surv_at_crossing(const SccFit& fit) {
    if (fit.theta_hat == 0.0) return 1.0;
    return 0.5 * (fit.s1(fit.theta_hat) + fit.s0(fit.theta_hat));
}

double rmst(const StepSurvival& s, double tau) {
    if (!(tau > 0.0)) throw InputError("tau must be positive");
    return s.integral(0.0, tau);
}

bool beyond_support(const StepSurvival& s, double tau) { return s.size() == 0 || tau > s.times().back(); }

double rrml(const StepSurvival& s, double t, double tau) {
    if (!(t >= 0.0) || t > tau) throw InputError("rrml requires 0 <= t <= tau");
    const double st = s(t);
    if (st <= kZeroSurvival) throw ZeroSurvivalError("survival is zero at the conditioning time");
    return s.integral(t, tau) / st;
}

double conditional_survival(const StepSurvival& s, double theta, double t) {
    if (t < theta) throw InputError("conditional survival requires t >= theta");
    const double st = s(theta);
    if (st <= kZeroSurvival) throw ZeroSurvivalError("survival is zero at the conditioning time");
    return s(t) / st;
}

std::pair<double, double> avg_hazard_ratios(const DiscreteHazards& h, double theta_hat) {
    if (h.size() == 0) throw CrossingOutOfRangeError("no grid times");
    const double tm = h.times.back();
    if (!(theta_hat > 0.0 && theta_hat < tm)) {
        throw CrossingOutOfRangeError("average hazard ratios need 0 < theta < t_m");
    }
    double pre = 0.0;
    double post = 0.0;
    double prev = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) {
        const double total = h.h0[j] + h.h1[j];
        const double term = total > 0.0 ? h.h1[j] * (h.times[j] - prev) / total : 0.0;
        (h.times[j] <= theta_hat ? pre : post) += term;
        prev = h.times[j];
    }
    return {pre / theta_hat, post / (tm - theta_hat)};
}

std::optional<double> EstimandReport::get(const std::string& key) const {
    for (const auto& [k, v] : values) {
        if (k == key) return v;
    }
    return std::nullopt;
}

std::string estimand_key(const std::string& name, double arg) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", arg);
    return name + "(" + buf + ")";
}

EstimandReport compute_estimands(const SccFit& fit, const EstimandOptions& opts) {
    if (fit.grid.size() == 0) throw InputError("fit has an empty grid");
    EstimandReport r;
    r.theta_hat = fit.theta_hat;
    r.gamma_hat = fit.gamma_hat;
    r.tau = opts.tau.value_or(fit.grid.times.back());
    if (!(r.tau > 0.0)) throw InputError("tau must be positive");
    if (beyond_support(fit.s0, r.tau)) {
        r.warnings.push_back("tau exceeds the last event time; RMST uses the flat tail");
    }
    const double theta = fit.theta_hat;

    r.values.emplace_back("theta", theta);
    r.values.emplace_back("gamma", fit.gamma_hat);
    r.values.emplace_back("surv_at_crossing", surv_at_crossing(fit));
    r.values.emplace_back(estimand_key("rmst_diff", r.tau), rmst(fit.s1, r.tau) - rmst(fit.s0, r.tau));

    if (theta <= r.tau) {
        try {
            r.values.emplace_back(estimand_key("rrml_diff", r.tau), rrml(fit.s1, theta, r.tau) - rrml(fit.s0, theta, r.tau));
        } catch (const ZeroSurvivalError&) {
            r.warnings.push_back("rrml_diff omitted: a fitted curve is zero at the crossing time");
        }
    }
    for (double t : opts.milestones) {
        r.values.emplace_back(estimand_key("milestone_diff", t), milestone_diff(fit.s1, fit.s0, t));
    }
    for (double t : opts.milestones) {
        if (t < theta) continue;
        try {
            r.values.emplace_back(estimand_key("cond_surv_diff", t),
                                  conditional_survival(fit.s1, theta, t) - conditional_survival(fit.s0, theta, t));
        } catch (const ZeroSurvivalError&) {
            r.warnings.push_back(estimand_key("cond_surv_diff", t) + " omitted: zero survival at the crossing time");
        }
    }

    const DiscreteHazards h = opts.hazards ? *opts.hazards : DiscreteHazards::from_fit(fit);
    const double htheta = opts.hazard_theta.value_or(theta);
    if (h.size() > 0 && htheta > 0.0 && htheta < h.times.back()) {
        const auto [pre, post] = avg_hazard_ratios(h, htheta);
        r.values.emplace_back("ahr_pre", pre);
        r.values.emplace_back("ahr_post", post);
    }
    return r;
}

std::string report_to_json(const EstimandReport& report) {
    nlohmann::ordered_json j;
    j["theta_hat"] = report.theta_hat;
    j["gamma_hat"] = report.gamma_hat;
    j["tau"] = report.tau;
    for (const auto& [k, v] : report.values) j[k] = v;
    j["warnings"] = report.warnings;
    return j.dump(2) + "\n";
}

void write_report_csv(std::ostream& out, const EstimandReport& report) {
    out << "parameter,estimate\n";
    char buf[64];
    for (const auto& [k, v] : report.values) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << k << ',' << buf << '\n';
    }
}

}  // namespace sccsurv
