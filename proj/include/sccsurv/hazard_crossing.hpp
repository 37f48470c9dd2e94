#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "sccsurv/constrained_mle.hpp"
#include "sccsurv/crossing_constraints.hpp"
#include "sccsurv/profile_search.hpp"
#include "sccsurv/survival_data.hpp"

namespace sccsurv {

// Discrete hazards h_ja = 1 - exp(u_ja) on the grid times.
struct DiscreteHazards {
    std::vector<double> times;
    std::vector<double> h0;
    std::vector<double> h1;

    static DiscreteHazards from_logjumps(std::vector<double> times, std::span<const double> u0,
                                         std::span<const double> u1);
    static DiscreteHazards from_fit(const SccFit& fit);

    // u = log(1 - h), per arm.
    std::vector<double> logjumps(int arm) const;
    std::size_t size() const { return times.size(); }
};

// Pointwise constraints: u_j0 >= u_j1 for t_j <= theta and u_j0 <= u_j1
// afterwards when gamma = +1, reversed for gamma = -1.
ConstraintSystem build_hazard_constraints(const EventGrid& grid, const CrossingParams& params);

SccFit scc_hazard_fit(const Cohort& cohort, const SolverOptions& opts = {});

struct SmoothedHazards {
    std::vector<double> times;
    std::vector<double> h0;
    std::vector<double> h1;
    bool single_crossing = true;
    std::optional<double> first_violation;  // where a second change of order occurs
};

// Single-crossing check for two sampled curves: the sign of h0 - h1 (ignoring
// |h0 - h1| <= tol) may change at most once.
void check_smoothed_crossing(SmoothedHazards& s, double tol = 1e-12);

// Local linear regression with tricube weights over the nearest span * m grid
// points, no robustness iterations, evaluated at `points` equally spaced times
// on [0, t_m]. Throws DegenerateWindowError when m < 3.
SmoothedHazards smooth_hazards(const DiscreteHazards& h, double span = 2.0 / 3.0, std::size_t points = 200);

void write_smoothed_csv(std::ostream& out, const SmoothedHazards& s);

}  // namespace sccsurv
