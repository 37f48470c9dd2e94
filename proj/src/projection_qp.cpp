#include "projection_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sccsurv::detail {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

// +1 for the control arm coordinate, -1 for the treatment arm coordinate.
inline double arm_coef(std::size_t coord, std::size_t m) { return coord < m ? 1.0 : -1.0; }

}  // namespace

ProjectionQp::ProjectionQp(const ConstraintSystem& system, const Box& box)
    : system_(system), box_(box), m_(system.grid_size()) {
    xhat_.resize(2 * m_);
    cross_mult_.resize(m_);
    bound_mult_.resize(2 * m_);
    step_.resize(2 * m_);
    block_nu_.reserve(m_ + 1);
    blocks_.reserve(m_ + 1);
}

void ProjectionQp::build_blocks(const WorkingSet& active) {
    blocks_.clear();
    if (system_.kind() == ConstraintKind::hazard) {
        for (std::size_t j = 0; j < m_; ++j) blocks_.push_back({j, j, active.crossing[j] != 0});
        return;
    }
    std::size_t start = 0;
    for (std::size_t j = 0; j < m_; ++j) {
        if (active.crossing[j]) {
            blocks_.push_back({start, j, true});
            start = j + 1;
        }
    }
    if (start < m_) blocks_.push_back({start, m_ - 1, false});
}

void ProjectionQp::equality_solve(std::span<const double> w, std::span<const double> z,
                                  const WorkingSet& active) {
    block_nu_.assign(blocks_.size(), 0.0);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto& blk = blocks_[b];
        double nu = 0.0;
        double den = 0.0;
        if (blk.constrained) {
            double num = 0.0;
            for (std::size_t j = blk.first; j <= blk.last; ++j) {
                for (std::size_t i : {j, j + m_}) {
                    const double c = arm_coef(i, m_);
                    if (active.bound[i] < 0) {
                        num += c * box_.lower[i];
                    } else if (active.bound[i] > 0) {
                        num += c * box_.upper[i];
                    } else {
                        num += c * z[i];
                        den += 1.0 / w[i];
                    }
                }
            }
            if (den > 0.0) nu = -num / den;
        }
        for (std::size_t j = blk.first; j <= blk.last; ++j) {
            for (std::size_t i : {j, j + m_}) {
                if (active.bound[i] == 0) {
                    xhat_[i] = z[i] + nu * arm_coef(i, m_) / w[i];
                } else {
                    xhat_[i] = active.bound[i] > 0 ? box_.upper[i] : box_.lower[i];
                }
            }
        }
        if (den > 0.0) {
            // z + nu c / w loses digits when 1 / w is large; one refinement pass
            // restores the block equality to rounding level.
            double residual = 0.0;
            for (std::size_t j = blk.first; j <= blk.last; ++j) residual += xhat_[j] - xhat_[j + m_];
            const double shift = residual / den;
            nu -= shift;
            for (std::size_t j = blk.first; j <= blk.last; ++j) {
                for (std::size_t i : {j, j + m_}) {
                    if (active.bound[i] == 0) xhat_[i] -= shift * arm_coef(i, m_) / w[i];
                }
            }
        }
        block_nu_[b] = nu;
        for (std::size_t j = blk.first; j <= blk.last; ++j) {
            for (std::size_t i : {j, j + m_}) {
                if (active.bound[i] == 0) {
                    bound_mult_[i] = 0.0;
                } else {
                    const double beta = w[i] * (xhat_[i] - z[i]) - nu * arm_coef(i, m_);
                    bound_mult_[i] = active.bound[i] > 0 ? -beta : beta;
                }
            }
        }
    }

    std::fill(cross_mult_.begin(), cross_mult_.end(), 0.0);
    if (system_.kind() == ConstraintKind::hazard) {
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            if (blocks_[b].constrained) cross_mult_[blocks_[b].last] = system_.sign(blocks_[b].last) * block_nu_[b];
        }
    } else {
        // Block multipliers are suffix sums of signed row multipliers.
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            if (!blocks_[b].constrained) continue;
            const double next = (b + 1 < blocks_.size() && blocks_[b + 1].constrained) ? block_nu_[b + 1] : 0.0;
            const std::size_t k = blocks_[b].last;
            cross_mult_[k] = system_.sign(k) * (block_nu_[b] - next);
        }
    }
}

bool ProjectionQp::block_has_free(std::size_t first, std::size_t last, const WorkingSet& active,
                                  std::size_t skip) const {
    for (std::size_t j = first; j <= last; ++j) {
        if (j != skip && active.bound[j] == 0) return true;
        if (j + m_ != skip && active.bound[j + m_] == 0) return true;
    }
    return false;
}

bool ProjectionQp::can_fix(std::size_t coord, const WorkingSet& active) const {
    const std::size_t j = coord % m_;
    if (system_.kind() == ConstraintKind::hazard) {
        return !active.crossing[j] || block_has_free(j, j, active, coord);
    }
    // Block containing j: from the previous active row + 1 to the next active row.
    std::size_t first = j;
    while (first > 0 && !active.crossing[first - 1]) --first;
    std::size_t last = j;
    while (last < m_ && !active.crossing[last]) ++last;
    if (last == m_) return true;  // trailing block carries no constraint
    return block_has_free(first, last, active, coord);
}

bool ProjectionQp::can_activate(std::size_t row, const WorkingSet& active) const {
    if (active.crossing[row]) return false;
    if (system_.kind() == ConstraintKind::hazard) return block_has_free(row, row, active);
    std::size_t first = row;
    while (first > 0 && !active.crossing[first - 1]) --first;
    if (!block_has_free(first, row, active)) return false;
    std::size_t last = row + 1;
    while (last < m_ && !active.crossing[last]) ++last;
    if (last == m_) return true;
    return block_has_free(row + 1, last, active);
}

QpResult ProjectionQp::solve(std::span<const double> w, std::span<const double> z, std::vector<double>& x,
                             WorkingSet& active, int max_iter, const WorkingSet* guess) {
    WorkingSet trial = guess ? *guess : active;
    for (std::size_t i = 0; i < 2 * m_; ++i) {
        if (pinned(i)) {
            trial.bound[i] = 1;
            active.bound[i] = 1;
        }
    }
    QpResult result = solve_pdas(w, z, trial, max_iter);
    if (result.converged) {
        std::copy(xhat_.begin(), xhat_.end(), x.begin());
        active = std::move(trial);
        return result;
    }
    const QpResult primal = solve_primal(w, z, x, active, max_iter);
    return {result.iterations + primal.iterations, primal.converged};
}

namespace {

std::uint64_t state_hash(const WorkingSet& ws) {
    std::uint64_t h = 1469598103934665603ull;
    for (auto b : ws.bound) h = (h ^ static_cast<std::uint8_t>(b)) * 1099511628211ull;
    for (auto c : ws.crossing) h = (h ^ c) * 1099511628211ull;
    return h;
}

}  // namespace

bool ProjectionQp::drop_dependent_rows(WorkingSet& active) const {
    bool changed = false;
    if (system_.kind() == ConstraintKind::hazard) {
        for (std::size_t k = 0; k < m_; ++k) {
            if (active.crossing[k] && active.bound[k] != 0 && active.bound[k + m_] != 0) {
                active.crossing[k] = 0;
                changed = true;
            }
        }
        return changed;
    }
    bool free_since_last = false;
    for (std::size_t k = 0; k < m_; ++k) {
        free_since_last = free_since_last || active.bound[k] == 0 || active.bound[k + m_] == 0;
        if (!active.crossing[k]) continue;
        if (free_since_last) {
            free_since_last = false;
        } else {
            active.crossing[k] = 0;
            changed = true;
        }
    }
    return changed;
}

QpResult ProjectionQp::solve_pdas(std::span<const double> w, std::span<const double> z, WorkingSet& active,
                                  int max_iter) {
    // Primal-dual active set iteration: keep constraints with non-negative
    // multipliers, add those violated by the equality-constrained minimizer.
    QpResult result;
    const std::size_t n = 2 * m_;
    const int limit = std::min(max_iter, 60);
    WorkingSet next;
    std::vector<std::uint64_t> seen;
    for (int iter = 0; iter < limit; ++iter) {
        result.iterations = iter + 1;
        drop_dependent_rows(active);
        build_blocks(active);
        equality_solve(w, z, active);

        double xmax = 1.0;
        double mscale = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            xmax = std::max(xmax, std::abs(xhat_[i]));
            mscale = std::max(mscale, std::abs(w[i] * (xhat_[i] - z[i])));
        }
        const double ftol = 1e-13 * xmax;
        const double mtol = 1e-11 * mscale;

        bool added = false;
        bool dropped = false;
        next = active;
        for (std::size_t i = 0; i < n; ++i) {
            if (active.bound[i] != 0) {
                if (bound_mult_[i] < -mtol && !pinned(i)) {
                    next.bound[i] = 0;
                    dropped = true;
                }
            } else if (xhat_[i] > box_.upper[i] + ftol) {
                next.bound[i] = 1;
                added = true;
            } else if (xhat_[i] < box_.lower[i] - ftol) {
                next.bound[i] = -1;
                added = true;
            }
        }
        const bool cumulative = system_.kind() == ConstraintKind::survival;
        double cum = 0.0;
        for (std::size_t k = 0; k < m_; ++k) {
            const double dx = xhat_[k] - xhat_[k + m_];
            cum = cumulative ? cum + dx : dx;
            if (active.crossing[k]) {
                if (cross_mult_[k] < -mtol) {
                    next.crossing[k] = 0;
                    dropped = true;
                }
            } else if (system_.sign(k) * cum < -ftol) {
                next.crossing[k] = 1;
                added = true;
            }
        }
        const std::uint64_t key = state_hash(next);
        const bool repeat = std::find(seen.begin(), seen.end(), key) != seen.end();
        seen.push_back(key);
        if (repeat && added && dropped) {
            // A short cycle: keep everything that is active and only add.
            for (std::size_t i = 0; i < n; ++i) {
                if (active.bound[i] != 0) next.bound[i] = active.bound[i];
            }
            for (std::size_t k = 0; k < m_; ++k) {
                if (active.crossing[k]) next.crossing[k] = 1;
            }
        }
        const bool changed = added || dropped;
        if (!changed) {
            result.converged = true;
            return result;
        }
        std::swap(active, next);
    }
    return result;
}

QpResult ProjectionQp::solve_primal(std::span<const double> w, std::span<const double> z, std::vector<double>& x,
                                    WorkingSet& active, int max_iter) {
    QpResult result;
    const std::size_t n = 2 * m_;
    bool single_drop = false;

    for (int iter = 0; iter < max_iter; ++iter) {
        result.iterations = iter + 1;
        build_blocks(active);
        equality_solve(w, z, active);

        double pmax = 0.0;
        double xmax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            step_[i] = xhat_[i] - x[i];
            pmax = std::max(pmax, std::abs(step_[i]));
            xmax = std::max(xmax, std::abs(x[i]));
        }

        if (pmax <= 1e-13 * (1.0 + xmax)) {
            std::copy(xhat_.begin(), xhat_.end(), x.begin());
            double mscale = 1.0;
            for (std::size_t i = 0; i < n; ++i) mscale = std::max(mscale, std::abs(w[i] * (x[i] - z[i])));
            const double mtol = 1e-11 * mscale;

            double worst = -mtol;
            std::size_t worst_row = kNone;
            std::size_t worst_coord = kNone;
            bool any = false;
            for (std::size_t k = 0; k < m_; ++k) {
                if (active.crossing[k] && cross_mult_[k] < -mtol) {
                    any = true;
                    if (cross_mult_[k] < worst) {
                        worst = cross_mult_[k];
                        worst_row = k;
                        worst_coord = kNone;
                    }
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (active.bound[i] != 0 && bound_mult_[i] < -mtol && !pinned(i)) {
                    any = true;
                    if (bound_mult_[i] < worst) {
                        worst = bound_mult_[i];
                        worst_coord = i;
                        worst_row = kNone;
                    }
                }
            }
            if (!any) {
                result.converged = true;
                return result;
            }
            if (single_drop) {
                if (worst_row != kNone) active.crossing[worst_row] = 0;
                if (worst_coord != kNone) active.bound[worst_coord] = 0;
            } else {
                for (std::size_t k = 0; k < m_; ++k) {
                    if (active.crossing[k] && cross_mult_[k] < -mtol) active.crossing[k] = 0;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    if (active.bound[i] != 0 && bound_mult_[i] < -mtol && !pinned(i)) active.bound[i] = 0;
                }
            }
            continue;
        }

        // Ratio test against constraints outside the working set.
        double alpha = 1.0;
        std::size_t block_row = kNone;
        std::size_t block_coord = kNone;
        int block_side = 0;
        const double dtol = 1e-14 * (1.0 + pmax);
        for (std::size_t i = 0; i < n; ++i) {
            if (active.bound[i] != 0) continue;
            double a = std::numeric_limits<double>::infinity();
            int side = 0;
            if (step_[i] > dtol) {
                a = (box_.upper[i] - x[i]) / step_[i];
                side = 1;
            } else if (step_[i] < -dtol) {
                a = (box_.lower[i] - x[i]) / step_[i];
                side = -1;
            }
            if (side != 0) {
                a = std::max(a, 0.0);
                if (a < alpha && can_fix(i, active)) {
                    alpha = a;
                    block_coord = i;
                    block_side = side;
                    block_row = kNone;
                }
            }
        }
        const bool cumulative = system_.kind() == ConstraintKind::survival;
        double cum_x = 0.0;
        double cum_p = 0.0;
        for (std::size_t k = 0; k < m_; ++k) {
            const double dx = x[k] - x[k + m_];
            const double dp = step_[k] - step_[k + m_];
            cum_x = cumulative ? cum_x + dx : dx;
            cum_p = cumulative ? cum_p + dp : dp;
            if (active.crossing[k]) continue;
            const double s = system_.sign(k);
            const double slack = s * cum_x;
            const double change = s * cum_p;
            if (change < -dtol) {
                const double a = std::max(slack, 0.0) / -change;
                if (a < alpha && can_activate(k, active)) {
                    alpha = a;
                    block_row = k;
                    block_coord = kNone;
                }
            }
        }

        if (block_row == kNone && block_coord == kNone) {
            std::copy(xhat_.begin(), xhat_.end(), x.begin());
            single_drop = false;
            continue;
        }
        if (alpha <= 0.0) {
            // Degenerate step: every constraint that blocks at zero length can
            // join the working set at once while it stays independent.
            add_blocking_at_zero(x, active, dtol);
            single_drop = true;
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * step_[i];
        if (block_coord != kNone) {
            active.bound[block_coord] = static_cast<std::int8_t>(block_side);
            x[block_coord] = block_side > 0 ? box_.upper[block_coord] : box_.lower[block_coord];
        } else {
            active.crossing[block_row] = 1;
        }
        single_drop = alpha <= 0.0;
    }
    return result;
}

void ProjectionQp::add_blocking_at_zero(std::span<const double> x, WorkingSet& active, double dtol) {
    for (std::size_t i = 0; i < 2 * m_; ++i) {
        if (active.bound[i] != 0) continue;
        int side = 0;
        if (step_[i] > dtol && x[i] >= box_.upper[i]) side = 1;
        if (step_[i] < -dtol && x[i] <= box_.lower[i]) side = -1;
        if (side != 0 && can_fix(i, active)) active.bound[i] = static_cast<std::int8_t>(side);
    }
    const bool cumulative = system_.kind() == ConstraintKind::survival;
    double cum_x = 0.0;
    double cum_p = 0.0;
    for (std::size_t k = 0; k < m_; ++k) {
        const double dx = x[k] - x[k + m_];
        const double dp = step_[k] - step_[k + m_];
        cum_x = cumulative ? cum_x + dx : dx;
        cum_p = cumulative ? cum_p + dp : dp;
        if (active.crossing[k]) continue;
        const double s = system_.sign(k);
        if (s * cum_p < -dtol && s * cum_x <= 0.0 && can_activate(k, active)) active.crossing[k] = 1;
    }
}

double ProjectionQp::infeasibility(std::span<const double> x) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < 2 * m_; ++i) {
        worst = std::max({worst, x[i] - box_.upper[i], box_.lower[i] - x[i]});
    }
    const auto slack = system_.crossing_slacks(x.subspan(0, m_), x.subspan(m_, m_));
    for (double s : slack) worst = std::max(worst, -s);
    return worst;
}

void ProjectionQp::restrict_to_active(std::span<double> x, WorkingSet& active, double tol) const {
    for (std::size_t i = 0; i < 2 * m_; ++i) {
        if (active.bound[i] == 0) continue;
        const double b = active.bound[i] > 0 ? box_.upper[i] : box_.lower[i];
        if (std::abs(x[i] - b) <= tol) {
            x[i] = b;
        } else {
            active.bound[i] = 0;
        }
    }
    const auto slack = system_.crossing_slacks(x.subspan(0, m_), x.subspan(m_, m_));
    const bool cumulative = system_.kind() == ConstraintKind::survival;
    bool free_since_last = false;
    for (std::size_t k = 0; k < m_; ++k) {
        const bool pair_free = active.bound[k] == 0 || active.bound[k + m_] == 0;
        free_since_last = cumulative ? (free_since_last || pair_free) : pair_free;
        if (!active.crossing[k]) continue;
        if (std::abs(slack[k]) <= tol && free_since_last) {
            free_since_last = false;
        } else {
            active.crossing[k] = 0;
        }
    }
}

WorkingSet ProjectionQp::pooled_working_set(std::span<const double> x) const {
    WorkingSet ws;
    ws.reset(m_);
    for (std::size_t i = 0; i < 2 * m_; ++i) {
        if (x[i] >= box_.upper[i]) {
            ws.bound[i] = 1;
        } else if (x[i] <= box_.lower[i]) {
            ws.bound[i] = -1;
        }
    }
    std::fill(ws.crossing.begin(), ws.crossing.end(), 1);
    std::vector<double> copy(x.begin(), x.end());
    restrict_to_active(copy, ws, 1e-12);
    return ws;
}

}  // namespace sccsurv::detail
