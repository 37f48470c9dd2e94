#pragma once

// Primal active-set solver for
//
//   minimize   1/2 sum_i w_i (x_i - z_i)^2
//   subject to crossing rows of a ConstraintSystem >= 0,  lower_i <= x_i <= upper_i
//
// with x = (u_0, u_1) of length 2m. Active crossing rows split the grid into
// blocks on which sum_j (x_j0 - x_j1) = 0, so each equality-constrained
// subproblem is solved in O(m) with one multiplier per block.

#include <cstdint>
#include <span>
#include <vector>

#include "sccsurv/crossing_constraints.hpp"

namespace sccsurv::detail {

struct Box {
    std::vector<double> lower;
    std::vector<double> upper;
};

// Constraints currently treated as equalities.
struct WorkingSet {
    std::vector<std::int8_t> bound;     // per coordinate: 0 free, -1 at lower, +1 at upper
    std::vector<std::uint8_t> crossing;  // per crossing row: 1 if active

    void reset(std::size_t m) {
        bound.assign(2 * m, 0);
        crossing.assign(m, 0);
    }
};

struct QpResult {
    int iterations = 0;
    bool converged = false;
};

class ProjectionQp {
public:
    ProjectionQp(const ConstraintSystem& system, const Box& box);

    // x must be feasible and every constraint in `active` must hold with
    // equality at x. On return x is the minimizer and `active` its active set.
    // A primal-dual active set iteration started from `guess` (default:
    // `active`) is tried first; the primal method from x is the fallback.
    QpResult solve(std::span<const double> weights, std::span<const double> target, std::vector<double>& x,
                   WorkingSet& active, int max_iter, const WorkingSet* guess = nullptr);

    // Largest violation of any crossing or box constraint at x (0 if feasible).
    double infeasibility(std::span<const double> x) const;

    // Drops constraints of `active` that do not hold with equality at x and
    // snaps fixed coordinates onto their bounds.
    void restrict_to_active(std::span<double> x, WorkingSet& active, double tol) const;

    // Working set for a point whose arms share every log-jump (all crossing
    // rows tight); used for the pooled starting point.
    WorkingSet pooled_working_set(std::span<const double> x) const;

private:
    // Coordinates with a zero-width box never leave the working set.
    bool pinned(std::size_t i) const { return box_.lower[i] == box_.upper[i]; }

    struct Block {
        std::size_t first;
        std::size_t last;  // inclusive
        bool constrained;
    };

    QpResult solve_pdas(std::span<const double> w, std::span<const double> z, WorkingSet& active, int max_iter);
    QpResult solve_primal(std::span<const double> w, std::span<const double> z, std::vector<double>& x,
                          WorkingSet& active, int max_iter);
    // Removes crossing rows whose block has no free coordinate left.
    bool drop_dependent_rows(WorkingSet& active) const;
    void build_blocks(const WorkingSet& active);
    void equality_solve(std::span<const double> w, std::span<const double> z, const WorkingSet& active);
    void add_blocking_at_zero(std::span<const double> x, WorkingSet& active, double dtol);
    bool can_fix(std::size_t coord, const WorkingSet& active) const;
    bool can_activate(std::size_t row, const WorkingSet& active) const;
    bool block_has_free(std::size_t first, std::size_t last, const WorkingSet& active,
                        std::size_t skip = static_cast<std::size_t>(-1)) const;

    const ConstraintSystem& system_;
    const Box& box_;
    std::size_t m_;

    std::vector<Block> blocks_;
    std::vector<double> xhat_;
    std::vector<double> block_nu_;
    std::vector<double> cross_mult_;
    std::vector<double> bound_mult_;
    std::vector<double> step_;
};

}  // namespace sccsurv::detail
