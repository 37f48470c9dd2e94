#include "sccsurv/crossing_constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sccsurv/errors.hpp"

namespace sccsurv {

void CrossingParams::validate() const {
    if (!(theta >= 0.0) || !std::isfinite(theta)) throw InputError("theta must be finite and non-negative");
    if (gamma != 1 && gamma != -1) throw InputError("gamma must be +1 or -1");
}

ConstraintSystem::ConstraintSystem(ConstraintKind kind, std::vector<std::int8_t> signs)
    : kind_(kind), signs_(std::move(signs)) {}

std::vector<int> ConstraintSystem::dense_row(std::size_t k) const {
    const std::size_t m = grid_size();
    std::vector<int> row(2 * m, 0);
    if (k < m) {
        const int s = signs_[k];
        const std::size_t first = kind_ == ConstraintKind::survival ? 0 : k;
        for (std::size_t j = first; j <= k; ++j) {
            row[j] = s;
            row[m + j] = -s;
        }
    } else {
        row[k - m] = -1;
    }
    return row;
}

std::vector<double> ConstraintSystem::crossing_slacks(std::span<const double> u0,
                                                      std::span<const double> u1) const {
    const std::size_t m = grid_size();
    if (u0.size() != m || u1.size() != m) throw DimensionMismatchError("log-jump vectors do not match the grid");
    std::vector<double> slack(m);
    double cum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double diff = u0[k] - u1[k];
        cum = kind_ == ConstraintKind::survival ? cum + diff : diff;
        slack[k] = signs_[k] * cum;
    }
    return slack;
}

double ConstraintSystem::min_slack(std::span<const double> u0, std::span<const double> u1) const {
    double lo = std::numeric_limits<double>::infinity();
    for (double s : crossing_slacks(u0, u1)) lo = std::min(lo, s);
    for (std::size_t j = 0; j < u0.size(); ++j) lo = std::min({lo, -u0[j], -u1[j]});
    return lo;
}

std::size_t v_index(double theta, const EventGrid& grid) {
    return static_cast<std::size_t>(std::upper_bound(grid.times.begin(), grid.times.end(), theta) -
                                    grid.times.begin());
}

ConstraintSystem build_constraints(const EventGrid& grid, const CrossingParams& params) {
    params.validate();
    const std::size_t m = grid.size();
    const std::size_t v = v_index(params.theta, grid);
    std::vector<std::int8_t> signs(m);
    for (std::size_t k = 0; k < m; ++k) {
        // Rows k + 1 <= v(theta) keep S_0 - S_1 on the gamma side.
        signs[k] = static_cast<std::int8_t>(k < v ? params.gamma : -params.gamma);
    }
    return ConstraintSystem(ConstraintKind::survival, std::move(signs));
}

bool check_single_crossing(const StepSurvival& s0, const StepSurvival& s1, const CrossingParams& params,
                           double tol) {
    params.validate();
    if (s0.times() != s1.times()) throw GridMismatchError("curves are defined on different grids");
    const auto& times = s0.times();
    for (std::size_t j = 0; j < times.size(); ++j) {
        const double diff = s0.values()[j] - s1.values()[j];
        const int side = times[j] <= params.theta ? params.gamma : -params.gamma;
        if (side * diff < -tol) return false;
    }
    return true;
}

}  // namespace sccsurv
