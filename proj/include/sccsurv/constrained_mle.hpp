#pragma once

#include <span>
#include <utility>
#include <vector>

#include "sccsurv/crossing_constraints.hpp"
#include "sccsurv/survival_data.hpp"

namespace sccsurv {

struct SolverOptions {
    double tol = 1e-7;   // scaled KKT residual required for convergence
    int max_iter = 500;  // outer SQP iterations per conditional fit
    int threads = 1;     // workers for independent fits (profile search)
};

struct FitResult {
    std::vector<double> u0;  // control log-jumps
    std::vector<double> u1;  // treatment log-jumps
    double loglik = 0.0;
    bool converged = false;
    double kkt_residual = 0.0;
    int iterations = 0;
};

// Nonparametric log-likelihood sum_a sum_j d log(1 - e^u) + (R - d) u.
// Returns -infinity when some u_ja = 0 with d_ja > 0.
double loglik(std::span<const double> u0, std::span<const double> u1, const EventGrid& grid);

// Least-squares projection of the Kaplan-Meier log-jumps onto the constraint
// set (with u_ja <= -1e-10 where d_ja > 0 and u >= -cap).
std::pair<std::vector<double>, std::vector<double>> init_from_km(const EventGrid& grid,
                                                                 const ConstraintSystem& system);

// Maximizes the log-likelihood over the constraint set by sequential quadratic
// programming started from init_from_km. Throws SolverFailureError when the
// KKT residual does not reach opts.tol within opts.max_iter iterations and
// InfeasibleConstraintsError when the constraint set has no point of positive
// likelihood. Jumps where an arm has nobody at risk are held at 0.
FitResult fit_conditional(const EventGrid& grid, const ConstraintSystem& system, const SolverOptions& opts = {});

FitResult fit_conditional(const EventGrid& grid, const CrossingParams& params, const SolverOptions& opts = {});

}  // namespace sccsurv
