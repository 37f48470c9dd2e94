#pragma once

// Reference computations written without the library's solver, grid or
// constraint code, used to cross-check it.

#include <cstddef>
#include <random>
#include <vector>

#include "sccsurv/survival_data.hpp"

namespace oracle {

struct Tables {
    std::vector<double> times;
    std::vector<std::vector<int>> d;  // d[arm][j]
    std::vector<std::vector<int>> r;  // r[arm][j]
    std::size_t m() const { return times.size(); }
};

// Risk table by direct indicator sums over subjects.
Tables tables(const sccsurv::Cohort& cohort);

// Product-limit estimate at t, computed subject by subject.
double km_direct(const sccsurv::Cohort& cohort, int arm, double t);

// Dense crossing rows over u = (u_0, u_1): prefix sums for survival curves,
// single coordinates for hazards. Rows u <= 0 are not included.
std::vector<std::vector<double>> crossing_rows(const std::vector<double>& times, double theta, int gamma, bool hazard);

double loglik(const Tables& t, const std::vector<double>& u);

// Log-barrier Newton maximization of the likelihood over the crossing rows
// and -cap <= u <= 0, to a duality gap below 1e-11. Jumps where an arm has
// nobody at risk are fixed at 0. A phase-one barrier looks for a strictly
// interior point first; without one the candidate is reported infeasible.
struct BarrierResult {
    std::vector<double> u;
    double loglik = 0.0;
    bool feasible = true;
};
BarrierResult barrier_fit(const Tables& t, const std::vector<std::vector<double>>& rows);

// |a - b|, with 0 when both log-likelihoods are -inf.
double loglik_gap(double a, double b);

// Best candidate under the documented tie-break, from a profile in
// (theta ascending, gamma +1 then -1) order.
std::size_t tie_break_argmax(const std::vector<double>& logliks, double tol);

// Random two-arm cohort with exponential event times (rates rate0, rate1),
// uniform censoring on [0, cens_hi] and times rounded to `digits` decimals.
sccsurv::Cohort random_cohort(std::mt19937_64& gen, std::size_t n0, std::size_t n1, double rate0, double rate1,
                              double cens_hi, int digits);

}  // namespace oracle
