#include "sccsurv/hazard_crossing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "sccsurv/errors.hpp"

namespace sccsurv {

DiscreteHazards DiscreteHazards::from_logjumps(std::vector<double> times, std::span<const double> u0,
                                               std::span<const double> u1) {
    if (u0.size() != times.size() || u1.size() != times.size()) {
        throw DimensionMismatchError("log-jump vectors do not match the grid");
    }
    DiscreteHazards h;
    h.times = std::move(times);
    h.h0.reserve(u0.size());
    h.h1.reserve(u1.size());
    for (double u : u0) h.h0.push_back(-std::expm1(u));
    for (double u : u1) h.h1.push_back(-std::expm1(u));
    return h;
}

DiscreteHazards DiscreteHazards::from_fit(const SccFit& fit) {
    return from_logjumps(fit.grid.times, fit.fit.u0, fit.fit.u1);
}

std::vector<double> DiscreteHazards::logjumps(int arm) const {
    const auto& h = arm == 0 ? h0 : h1;
    std::vector<double> u;
    u.reserve(h.size());
    for (double x : h) u.push_back(std::max(std::log1p(-x), -kZeroSurvivalCap));
    return u;
}

ConstraintSystem build_hazard_constraints(const EventGrid& grid, const CrossingParams& params) {
    params.validate();
    const std::size_t m = grid.size();
    const std::size_t v = v_index(params.theta, grid);
    std::vector<std::int8_t> signs(m);
    for (std::size_t k = 0; k < m; ++k) signs[k] = static_cast<std::int8_t>(k < v ? params.gamma : -params.gamma);
    return ConstraintSystem(ConstraintKind::hazard, std::move(signs));
}

SccFit scc_hazard_fit(const Cohort& cohort, const SolverOptions& opts) {
    return scc_fit(build_event_grid(cohort), ConstraintKind::hazard, opts);
}

namespace {

double lowess_at(double x, std::span<const double> xs, std::span<const double> ys, std::size_t q,
                 std::vector<double>& dist) {
    const std::size_t n = xs.size();
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(xs[i] - x);
    std::vector<double> sorted(dist.begin(), dist.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q - 1), sorted.end());
    const double radius = sorted[q - 1];

    double sw = 0.0, sx = 0.0, sy = 0.0;
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (radius <= 0.0) {
            w[i] = dist[i] <= 0.0 ? 1.0 : 0.0;
        } else if (dist[i] < radius) {
            const double r = dist[i] / radius;
            const double c = 1.0 - r * r * r;
            w[i] = c * c * c;
        }
        sw += w[i];
        sx += w[i] * xs[i];
        sy += w[i] * ys[i];
    }
    if (sw <= 0.0) {
        // Every neighbour sits exactly on the radius; fall back to equal weights.
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = dist[i] <= radius ? 1.0 : 0.0;
            sw += w[i];
            sx += w[i] * xs[i];
            sy += w[i] * ys[i];
        }
    }
    const double xbar = sx / sw;
    const double ybar = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - xbar;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * (ys[i] - ybar);
    }
    const double range = xs.back() - xs.front();
    if (sxx <= 1e-12 * sw * range * range) return ybar;
    return ybar + sxy / sxx * (x - xbar);
}

}  // namespace

void check_smoothed_crossing(SmoothedHazards& s, double tol) {
    s.single_crossing = true;
    s.first_violation.reset();
    int side = 0;
    int changes = 0;
    for (std::size_t i = 0; i < s.times.size(); ++i) {
        const double diff = s.h0[i] - s.h1[i];
        if (std::abs(diff) <= tol) continue;
        const int now = diff > 0 ? 1 : -1;
        if (side != 0 && now != side && ++changes == 2) {
            s.single_crossing = false;
            s.first_violation = s.times[i];
            return;
        }
        side = now;
    }
}

SmoothedHazards smooth_hazards(const DiscreteHazards& h, double span, std::size_t points) {
    const std::size_t m = h.size();
    if (m < 3) throw DegenerateWindowError("smoothing needs at least 3 grid points");
    if (!(span > 0.0 && span <= 1.0)) throw InputError("span must lie in (0, 1]");
    if (points < 2) throw InputError("at least two evaluation points are required");

    const std::size_t q = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(span * m - 1e-9)), 2, m);
    SmoothedHazards out;
    out.times.resize(points);
    out.h0.resize(points);
    out.h1.resize(points);
    std::vector<double> dist(m);
    const double end = h.times.back();
    for (std::size_t i = 0; i < points; ++i) {
        const double t = end * static_cast<double>(i) / static_cast<double>(points - 1);
        out.times[i] = t;
        out.h0[i] = lowess_at(t, h.times, h.h0, q, dist);
        out.h1[i] = lowess_at(t, h.times, h.h1, q, dist);
    }
    check_smoothed_crossing(out);
    return out;
}

void write_smoothed_csv(std::ostream& out, const SmoothedHazards& s) {
    out << "time,h0,h1\n";
    char buf[96];
    for (std::size_t i = 0; i < s.times.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", s.times[i], s.h0[i], s.h1[i]);
        out << buf;
    }
}

}  // namespace sccsurv
