#include "sccsurv/profile_search.hpp"

#include <algorithm>
#include <limits>

#include "parallel.hpp"
#include "sccsurv/errors.hpp"
#include "sccsurv/hazard_crossing.hpp"

namespace sccsurv {

ConstraintSystem make_constraints(const EventGrid& grid, const CrossingParams& params, ConstraintKind kind) {
    return kind == ConstraintKind::survival ? build_constraints(grid, params) : build_hazard_constraints(grid, params);
}

double profile_loglik(const EventGrid& grid, const CrossingParams& params, const SolverOptions& opts,
                      ConstraintKind kind) {
    try {
        return fit_conditional(grid, make_constraints(grid, params, kind), opts).loglik;
    } catch (const InfeasibleConstraintsError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

SccFit scc_fit(const EventGrid& grid, ConstraintKind kind, const SolverOptions& opts) {
    const std::size_t m = grid.size();
    if (m == 0) throw EmptyArmError("no event times");

    std::vector<CrossingParams> candidates;
    candidates.reserve(2 * m);
    for (std::size_t v = 0; v < m; ++v) {
        const double theta = v == 0 ? 0.0 : grid.times[v - 1];
        candidates.push_back({theta, 1});
        candidates.push_back({theta, -1});
    }

    std::vector<FitResult> fits(candidates.size());
    detail::parallel_for(candidates.size(), opts.threads, [&](std::size_t i) {
        try {
            fits[i] = fit_conditional(grid, make_constraints(grid, candidates[i], kind), opts);
        } catch (const InfeasibleConstraintsError&) {
            fits[i].loglik = -std::numeric_limits<double>::infinity();
        } catch (const SolverFailureError& e) {
            if (e.theta()) throw;
            throw SolverFailureError(e.what(), candidates[i].theta, candidates[i].gamma);
        }
    });

    SccFit out;
    out.kind = kind;
    out.grid = grid;
    out.profile.reserve(candidates.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out.profile.push_back({candidates[i].theta, candidates[i].gamma, fits[i].loglik});
        best = std::max(best, fits[i].loglik);
    }
    std::size_t chosen = 0;
    while (out.profile[chosen].loglik < best - kProfileTieTol) ++chosen;

    out.theta_hat = candidates[chosen].theta;
    out.gamma_hat = candidates[chosen].gamma;
    out.loglik = fits[chosen].loglik;
    out.fit = std::move(fits[chosen]);
    std::tie(out.s0, out.s1) = curves_from_fit(out.fit, grid);
    return out;
}

SccFit scc_fit(const Cohort& cohort, const SolverOptions& opts) {
    return scc_fit(build_event_grid(cohort), ConstraintKind::survival, opts);
}

std::pair<StepSurvival, StepSurvival> curves_from_fit(const FitResult& fit, const EventGrid& grid) {
    if (fit.u0.size() != grid.size() || fit.u1.size() != grid.size()) {
        throw DimensionMismatchError("fit does not match the grid");
    }
    return {StepSurvival::from_logjumps(grid.times, fit.u0), StepSurvival::from_logjumps(grid.times, fit.u1)};
}

}  // namespace sccsurv
