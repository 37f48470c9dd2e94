#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sccsurv/survival_data.hpp"

namespace sccsurv {

struct CrossingParams {
    double theta = 0.0;  // 0 means no crossing
    int gamma = 1;       // +1: control dominant before the crossing

    // Throws InputError unless theta >= 0 and gamma is +1 or -1.
    void validate() const;
};

// Whether crossing rows constrain cumulative log-survival (survival curves)
// or individual log-jumps (discrete hazards).
enum class ConstraintKind { survival, hazard };

// The 3m x 2m system A u >= 0 over u = (u_0, u_1), stored as one sign per
// crossing row. Row k < m is
//   survival: sign[k] * sum_{j<=k} (u_j0 - u_j1) >= 0
//   hazard:   sign[k] * (u_k0 - u_k1) >= 0
// and rows m .. 3m-1 are -u_i >= 0.
class ConstraintSystem {
public:
    ConstraintSystem() = default;
    ConstraintSystem(ConstraintKind kind, std::vector<std::int8_t> signs);

    ConstraintKind kind() const { return kind_; }
    std::size_t grid_size() const { return signs_.size(); }
    std::size_t row_count() const { return 3 * signs_.size(); }
    int sign(std::size_t k) const { return signs_[k]; }
    const std::vector<std::int8_t>& signs() const { return signs_; }

    // Dense row k (length 2m) with entries in {-1, 0, +1}.
    std::vector<int> dense_row(std::size_t k) const;

    // Slack sign[k] * (...) of every crossing row.
    std::vector<double> crossing_slacks(std::span<const double> u0, std::span<const double> u1) const;

    // Smallest a_k^T u over all 3m rows.
    double min_slack(std::span<const double> u0, std::span<const double> u1) const;

private:
    ConstraintKind kind_ = ConstraintKind::survival;
    std::vector<std::int8_t> signs_;
};

// max{j : t_j <= theta} with 1-based j, or 0 when theta < t_1.
std::size_t v_index(double theta, const EventGrid& grid);

ConstraintSystem build_constraints(const EventGrid& grid, const CrossingParams& params);

// Checks S_0 >= S_1 - tol at grid times <= theta and S_0 <= S_1 + tol after
// (mirrored for gamma = -1). Throws GridMismatchError if the grids differ.
bool check_single_crossing(const StepSurvival& s0, const StepSurvival& s1, const CrossingParams& params,
                           double tol);

}  // namespace sccsurv
