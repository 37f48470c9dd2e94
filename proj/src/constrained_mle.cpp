#include "sccsurv/constrained_mle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>

#include "projection_qp.hpp"
#include "sccsurv/errors.hpp"

namespace sccsurv {

namespace {

// Iterates keep u <= kEventCeiling wherever d > 0, since the likelihood is -inf at 0.
constexpr double kEventCeiling = -1e-10;
// Model curvature for coordinates without events, where the likelihood is
// linear. Coordinates nobody is at risk for are pinned by the box, so their
// curvature only has to be positive.
constexpr double kLinearCurvature = 1.0;
constexpr double kPinnedCurvature = 1.0;
// Where every subject at risk fails, the likelihood keeps rising toward the
// lower bound by about e^u while Newton steps move u by about one unit, so a
// small KKT residual can still leave a visible loss. Iteration continues
// until the model gain on those coordinates is below this.
constexpr double kAllFailGain = 1e-10;

double log1m_exp(double u) {
    return u > -std::numbers::ln2 ? std::log(-std::expm1(u)) : std::log1p(-std::exp(u));
}

// Per-coordinate data in the (u_0, u_1) layout.
struct Coordinates {
    std::vector<double> d;
    std::vector<double> r;

    explicit Coordinates(const EventGrid& grid) {
        const std::size_t m = grid.size();
        d.resize(2 * m);
        r.resize(2 * m);
        for (int arm : {0, 1}) {
            for (std::size_t j = 0; j < m; ++j) {
                d[arm * m + j] = grid.d(j, arm);
                r[arm * m + j] = grid.r(j, arm);
            }
        }
    }

    double value(std::span<const double> x) const {
        double total = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (d[i] > 0.0) {
                if (x[i] >= 0.0) return -std::numeric_limits<double>::infinity();
                total += d[i] * log1m_exp(x[i]);
            }
            total += (r[i] - d[i]) * x[i];
        }
        return total;
    }

    // value(y) - value(x), for feasible x and y.
    double gain(std::span<const double> x, std::span<const double> y) const {
        double total = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double step = y[i] - x[i];
            if (step == 0.0) continue;
            if (d[i] > 0.0) {
                if (y[i] >= 0.0) return -std::numeric_limits<double>::infinity();
                // log((1 - e^y) / (1 - e^x))
                total += d[i] * std::log1p(std::exp(x[i]) * -std::expm1(step) / -std::expm1(x[i]));
            }
            total += (r[i] - d[i]) * step;
        }
        return total;
    }

    // Gradient and negated (regularized) diagonal Hessian.
    void derivatives(std::span<const double> x, std::vector<double>& g, std::vector<double>& w) const {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (d[i] > 0.0) {
                const double e = std::exp(x[i]);
                const double om = -std::expm1(x[i]);
                g[i] = -d[i] * e / om + (r[i] - d[i]);
                w[i] = std::max(d[i] * e / (om * om), std::numeric_limits<double>::min());
            } else {
                g[i] = r[i];
                w[i] = r[i] > 0.0 ? kLinearCurvature * r[i] : kPinnedCurvature;
            }
        }
    }
};

detail::Box make_box(const EventGrid& grid) {
    const std::size_t m = grid.size();
    detail::Box box;
    box.lower.assign(2 * m, -kZeroSurvivalCap);
    box.upper.assign(2 * m, 0.0);
    for (int arm : {0, 1}) {
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t i = arm * m + j;
            if (grid.d(j, arm) > 0) box.upper[i] = kEventCeiling;
            // No information without anyone at risk; the curve stays level as in Kaplan-Meier.
            if (grid.r(j, arm) == 0) box.lower[i] = 0.0;
        }
    }
    return box;
}

// A feasible point as close to equal arms as the boxes allow. Each pair
// difference u_j0 - u_j1 ranges over an interval; forward passes collect the
// reachable values of every row, a backward pass picks values nearest 0 and
// the split between arms follows the pooled target.
std::optional<std::vector<double>> feasible_point(const ConstraintSystem& system, const detail::Box& box,
                                                  std::span<const double> target) {
    const std::size_t m = system.grid_size();
    const bool cumulative = system.kind() == ConstraintKind::survival;
    std::vector<double> lo(m), hi(m), reach_lo(m), reach_hi(m);
    for (std::size_t k = 0; k < m; ++k) {
        lo[k] = box.lower[k] - box.upper[k + m];
        hi[k] = box.upper[k] - box.lower[k + m];
        double a = lo[k];
        double b = hi[k];
        if (cumulative && k > 0) {
            a += reach_lo[k - 1];
            b += reach_hi[k - 1];
        }
        if (system.sign(k) > 0) a = std::max(a, 0.0);
        if (system.sign(k) < 0) b = std::min(b, 0.0);
        if (a > b) return std::nullopt;
        reach_lo[k] = a;
        reach_hi[k] = b;
    }

    std::vector<double> diff(m);
    double next = 0.0;
    for (std::size_t k = m; k-- > 0;) {
        double a = reach_lo[k];
        double b = reach_hi[k];
        if (cumulative && k + 1 < m) {
            a = std::max(a, next - hi[k + 1]);
            b = std::min(b, next - lo[k + 1]);
        }
        const double value = std::clamp(0.0, a, std::max(a, b));
        if (cumulative && k + 1 < m) diff[k + 1] = next - value;
        if (!cumulative) diff[k] = value;
        next = value;
    }
    if (cumulative) diff[0] = next;

    std::vector<double> x(2 * m);
    for (std::size_t j = 0; j < m; ++j) {
        const double delta = std::clamp(diff[j], lo[j], hi[j]);
        const double a = std::max(box.lower[j + m], box.lower[j] - delta);
        const double b = std::min(box.upper[j + m], box.upper[j] - delta);
        const double u1 = std::clamp(0.5 * (target[j] + target[j + m]), a, std::max(a, b));
        x[j] = std::clamp(u1 + delta, box.lower[j], box.upper[j]);
        x[j + m] = u1;
    }
    return x;
}

int qp_iteration_limit(std::size_t m) { return static_cast<int>(40 * m + 200); }

struct StartPoint {
    std::vector<double> x;
    detail::WorkingSet active;
};

StartPoint project_km(const EventGrid& grid, const ConstraintSystem& system, const detail::Box& box,
                      detail::ProjectionQp& qp) {
    const std::size_t m = grid.size();
    std::vector<double> target(2 * m);
    for (int arm : {0, 1}) {
        const auto km = kaplan_meier_logjumps(grid, arm);
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t i = arm * m + j;
            target[i] = std::clamp(km[j], box.lower[i], box.upper[i]);
        }
    }

    StartPoint start;
    const auto slack = system.crossing_slacks(std::span(target).subspan(0, m), std::span(target).subspan(m, m));
    if (std::all_of(slack.begin(), slack.end(), [](double s) { return s >= 0.0; })) {
        start.x = target;
        start.active = qp.pooled_working_set(start.x);
        return start;
    }

    auto point = feasible_point(system, box, target);
    if (!point) throw InfeasibleConstraintsError("no point of positive likelihood satisfies the crossing constraints");
    start.x = std::move(*point);
    const std::vector<double> pooled = start.x;
    start.active = qp.pooled_working_set(start.x);
    const std::vector<double> ones(2 * m, 1.0);
    const auto res = qp.solve(ones, target, start.x, start.active, qp_iteration_limit(m));
    if (!res.converged) throw SolverFailureError("Kaplan-Meier projection did not converge");

    // The projection can put event coordinates on their ceiling, where Newton
    // steps on log(1 - e^u) only double the distance to 0 per iteration. A
    // small move toward the pooled point stays feasible and avoids that.
    constexpr double kPullBack = 1e-2;
    bool near_ceiling = false;
    for (std::size_t i = 0; i < 2 * m; ++i) {
        if (box.upper[i] < 0.0 && start.x[i] > -1e-6) near_ceiling = true;
    }
    if (near_ceiling) {
        for (std::size_t i = 0; i < 2 * m; ++i) start.x[i] = (1.0 - kPullBack) * start.x[i] + kPullBack * pooled[i];
        qp.restrict_to_active(start.x, start.active, 1e-12);
    }
    return start;
}

}  // namespace

double loglik(std::span<const double> u0, std::span<const double> u1, const EventGrid& grid) {
    const std::size_t m = grid.size();
    if (u0.size() != m || u1.size() != m) throw DimensionMismatchError("log-jump vectors do not match the grid");
    double total = 0.0;
    for (int arm : {0, 1}) {
        const auto u = arm == 0 ? u0 : u1;
        for (std::size_t j = 0; j < m; ++j) {
            const double d = grid.d(j, arm);
            const double r = grid.r(j, arm);
            if (d > 0.0) {
                if (u[j] >= 0.0) return -std::numeric_limits<double>::infinity();
                total += d * log1m_exp(u[j]);
            }
            total += (r - d) * u[j];
        }
    }
    return total;
}

std::pair<std::vector<double>, std::vector<double>> init_from_km(const EventGrid& grid,
                                                                 const ConstraintSystem& system) {
    if (system.grid_size() != grid.size()) throw DimensionMismatchError("constraint system does not match grid");
    const auto box = make_box(grid);
    detail::ProjectionQp qp(system, box);
    auto start = project_km(grid, system, box, qp);
    const std::size_t m = grid.size();
    return {std::vector<double>(start.x.begin(), start.x.begin() + static_cast<std::ptrdiff_t>(m)),
            std::vector<double>(start.x.begin() + static_cast<std::ptrdiff_t>(m), start.x.end())};
}

FitResult fit_conditional(const EventGrid& grid, const ConstraintSystem& system, const SolverOptions& opts) {
    if (system.grid_size() != grid.size()) throw DimensionMismatchError("constraint system does not match grid");
    if (opts.max_iter <= 0) throw SolverFailureError("max_iter must allow at least one iteration");

    const std::size_t m = grid.size();
    const std::size_t n = 2 * m;
    const auto box = make_box(grid);
    const Coordinates coords(grid);
    detail::ProjectionQp qp(system, box);

    auto [x, active] = project_km(grid, system, box, qp);
    if (qp.infeasibility(x) > 1e-9) throw InfeasibleStartError("initial point violates the constraints");

    double f = coords.value(x);
    std::vector<double> g(n), w(n), z(n), trial(n);
    FitResult result;

    for (int it = 1; it <= opts.max_iter; ++it) {
        result.iterations = it;
        coords.derivatives(x, g, w);
        for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + g[i] / w[i];

        std::vector<double> xq = x;
        detail::WorkingSet next = active;
        const auto qres = qp.solve(w, z, xq, next, qp_iteration_limit(m));
        if (!qres.converged) throw SolverFailureError("quadratic subproblem did not converge");

        double kkt = 0.0;
        double slope = 0.0;
        double all_fail_gain = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = xq[i] - x[i];
            kkt = std::max(kkt, (std::abs(w[i] * p) + std::abs(g[i] * p)) / std::max(coords.r[i], 1.0));
            slope += g[i] * p;
            if (coords.d[i] > 0.0 && coords.d[i] == coords.r[i]) all_fail_gain += std::abs(g[i] * p);
        }
        result.kkt_residual = kkt;

        // Backtracking line search on the feasible segment [x, xq]; the gain
        // is accumulated per coordinate so that it stays accurate near the optimum.
        // Event coordinates cover at most 90% of their distance to 0 per step;
        // a full step onto the ceiling would take many iterations to undo.
        double alpha = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = xq[i] - x[i];
            if (coords.d[i] > 0.0 && p > -0.9 * x[i]) alpha = std::min(alpha, -0.9 * x[i] / p);
        }
        double gain = 0.0;
        if (alpha == 1.0) {
            gain = coords.gain(x, xq);
        } else {
            for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + alpha * (xq[i] - x[i]);
            gain = coords.gain(x, trial);
        }
        while (slope > 0.0 && !(gain >= 1e-4 * alpha * slope) && alpha > 1e-12) {
            alpha *= 0.5;
            for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + alpha * (xq[i] - x[i]);
            gain = coords.gain(x, trial);
        }
        const bool accepted = (slope > 0.0 && gain >= 1e-4 * alpha * slope) || (kkt <= opts.tol && gain >= -1e-15 * (1.0 + std::abs(f)));
        if (accepted) {
            if (alpha == 1.0) {
                x = std::move(xq);
                active = std::move(next);
            } else {
                x = trial;
                active = std::move(next);
                qp.restrict_to_active(x, active, 1e-12);
            }
            f += gain;
        }

        // A model ascent below double resolution of f cannot be realized, so a
        // nearly stationary point is accepted as converged.
        const bool resolution_limited =
            slope <= 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f)) && kkt <= std::sqrt(opts.tol);
        if ((kkt <= opts.tol && all_fail_gain <= kAllFailGain) || resolution_limited) {
            result.converged = true;
            break;
        }
        if (!accepted) break;
    }

    if (!result.converged) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "constrained likelihood maximization did not converge (kkt residual %.3g)",
                      result.kkt_residual);
        throw SolverFailureError(buf);
    }
    result.u0.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(m));
    result.u1.assign(x.begin() + static_cast<std::ptrdiff_t>(m), x.end());
    result.loglik = loglik(result.u0, result.u1, grid);
    return result;
}

FitResult fit_conditional(const EventGrid& grid, const CrossingParams& params, const SolverOptions& opts) {
    return fit_conditional(grid, build_constraints(grid, params), opts);
}

}  // namespace sccsurv
