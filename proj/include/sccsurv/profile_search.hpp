#pragma once

#include <utility>
#include <vector>

#include "sccsurv/constrained_mle.hpp"
#include "sccsurv/crossing_constraints.hpp"
#include "sccsurv/survival_data.hpp"

namespace sccsurv {

struct ProfileEntry {
    double theta = 0.0;
    int gamma = 1;
    double loglik = 0.0;
};

struct SccFit {
    ConstraintKind kind = ConstraintKind::survival;
    EventGrid grid;
    double theta_hat = 0.0;
    int gamma_hat = 1;
    StepSurvival s0;
    StepSurvival s1;
    std::vector<ProfileEntry> profile;  // theta ascending, gamma = +1 before -1
    double loglik = 0.0;
    FitResult fit;  // conditional fit at (theta_hat, gamma_hat)
};

// Profile log-likelihoods within this distance of the maximum count as ties.
inline constexpr double kProfileTieTol = 1e-9;

// Crossing system of the requested kind for fixed (theta, gamma).
ConstraintSystem make_constraints(const EventGrid& grid, const CrossingParams& params, ConstraintKind kind);

// -inf when the candidate's constraint set is infeasible.
double profile_loglik(const EventGrid& grid, const CrossingParams& params, const SolverOptions& opts = {},
                      ConstraintKind kind = ConstraintKind::survival);

// Maximizes the profile likelihood over theta in {0, t_1, ..., t_{m-1}} and
// gamma in {+1, -1}. Ties go to the smallest theta, then gamma = +1.
// Infeasible candidates enter the profile with log-likelihood -inf.
SccFit scc_fit(const EventGrid& grid, ConstraintKind kind, const SolverOptions& opts = {});
SccFit scc_fit(const Cohort& cohort, const SolverOptions& opts = {});

std::pair<StepSurvival, StepSurvival> curves_from_fit(const FitResult& fit, const EventGrid& grid);

}  // namespace sccsurv
