#include "sccsurv/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>

#include "parallel.hpp"
#include "sccsurv/errors.hpp"
#include "sccsurv/estimands.hpp"
#include "sccsurv/hazard_crossing.hpp"

namespace sccsurv {

double quantile_type7(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw InputError("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile probability must lie in [0, 1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Cohort resample_stratified(const Cohort& cohort, Philox& rng) {
    std::vector<Subject> out;
    out.reserve(cohort.size());
    for (int arm : {0, 1}) {
        std::vector<const Subject*> pool;
        for (const auto& s : cohort.subjects()) {
            if (s.arm == arm) pool.push_back(&s);
        }
        for (std::size_t i = 0; i < pool.size(); ++i) out.push_back(*pool[rng.below(pool.size())]);
    }
    return Cohort(std::move(out));
}

Cohort permute_arms(const Cohort& cohort, Philox& rng) {
    std::vector<Subject> out = cohort.subjects();
    std::vector<int> arms;
    arms.reserve(out.size());
    for (const auto& s : out) arms.push_back(s.arm);
    for (std::size_t i = arms.size(); i > 1; --i) std::swap(arms[i - 1], arms[rng.below(i)]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].arm = arms[i];
    return Cohort(std::move(out));
}

namespace {

void check_resampling_args(int B, double level) {
    if (B < 1) throw InputError("B must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw InputError("level must lie in (0, 1)");
}

// Replicate values in order; failed replicates are nullopt.
std::vector<std::optional<double>> run_bootstrap(const Cohort& cohort, const CohortStatistic& statistic, int B,
                                                 std::uint64_t seed, int threads) {
    std::vector<std::optional<double>> values(static_cast<std::size_t>(B));
    detail::parallel_for(values.size(), threads, [&](std::size_t b) {
        Philox rng(seed, stream_id(StreamTag::bootstrap, b));
        try {
            values[b] = statistic(resample_stratified(cohort, rng));
        } catch (const Error&) {
            values[b].reset();
        }
    });
    return values;
}

std::vector<double> successful(const std::vector<std::optional<double>>& values, int& failures) {
    std::vector<double> out;
    out.reserve(values.size());
    failures = 0;
    for (const auto& v : values) {
        if (v) {
            out.push_back(*v);
        } else {
            ++failures;
        }
    }
    return out;
}

std::optional<std::string> failure_warning(int failures, int B) {
    if (failures > kFailureWarnFraction * B) {
        return std::to_string(failures) + " of " + std::to_string(B) + " replicates failed and were excluded";
    }
    return std::nullopt;
}

JointTestResult joint_test(const Cohort& cohort, const std::function<double(const SccFit&)>& eta, double phi_star,
                           double threshold, int B, double level, std::uint64_t seed, const SolverOptions& opts,
                           int threads) {
    check_resampling_args(B, level);
    SolverOptions inner = opts;
    inner.threads = 1;
    const CohortStatistic statistic = [&](const Cohort& c) { return eta(scc_fit(c, inner)); };

    JointTestResult r;
    r.eta = statistic(cohort);
    r.phi_star = phi_star;
    r.threshold = threshold;
    r.level = level;
    r.B = B;
    r.seed = seed;
    r.replicates = successful(run_bootstrap(cohort, statistic, B, seed, threads), r.failures);
    if (r.replicates.empty()) throw SolverFailureError("every bootstrap replicate failed");
    if (auto w = failure_warning(r.failures, B)) r.warnings.push_back(*w);
    std::vector<double> sorted = r.replicates;
    std::sort(sorted.begin(), sorted.end());
    r.ci_lower = quantile_type7(sorted, 1.0 - level);
    r.reject = r.ci_lower > 0.0;
    return r;
}

}  // namespace

BootstrapResult stratified_bootstrap(const Cohort& cohort, const CohortStatistic& statistic, int B, double level,
                                     std::uint64_t seed, int threads, const std::string& estimand) {
    check_resampling_args(B, level);
    BootstrapResult r;
    r.estimand = estimand;
    r.point = statistic(cohort);
    r.level = level;
    r.seed = seed;
    r.B = B;
    r.replicates = successful(run_bootstrap(cohort, statistic, B, seed, threads), r.failures);
    if (r.replicates.empty()) throw SolverFailureError("every bootstrap replicate failed");
    if (auto w = failure_warning(r.failures, B)) r.warnings.push_back(*w);
    std::vector<double> sorted = r.replicates;
    std::sort(sorted.begin(), sorted.end());
    const double tail = 0.5 * (1.0 - level);
    r.ci_lower = quantile_type7(sorted, tail);
    r.ci_upper = quantile_type7(sorted, 1.0 - tail);
    return r;
}

JointTestResult joint_test_theta(const Cohort& cohort, const FitStatistic& phi, double phi_star, double theta_star,
                                 int B, double level, std::uint64_t seed, const SolverOptions& opts, int threads) {
    if (!(theta_star >= 0.0)) throw InputError("theta* must be non-negative");
    return joint_test(
        cohort, [&](const SccFit& fit) { return std::min(phi(fit) - phi_star, theta_star - fit.theta_hat); }, phi_star,
        theta_star, B, level, seed, opts, threads);
}

JointTestResult joint_test_surv(const Cohort& cohort, const FitStatistic& phi, double phi_star, double p_star, int B,
                                double level, std::uint64_t seed, const SolverOptions& opts, int threads) {
    if (!(p_star >= 0.0 && p_star <= 1.0)) throw InputError("p* must lie in [0, 1]");
    return joint_test(
        cohort, [&](const SccFit& fit) { return std::min(phi(fit) - phi_star, fit.s1(fit.theta_hat) - p_star); },
        phi_star, p_star, B, level, seed, opts, threads);
}

Direction parse_direction(const std::string& s) {
    if (s == "greater") return Direction::greater;
    if (s == "less") return Direction::less;
    if (s == "two_sided" || s == "two-sided") return Direction::two_sided;
    throw InputError("unknown direction '" + s + "' (expected greater, less or two_sided)");
}

const char* direction_name(Direction d) {
    switch (d) {
        case Direction::greater: return "greater";
        case Direction::less: return "less";
        case Direction::two_sided: return "two_sided";
    }
    return "";
}

PermutationResult permutation_test(const Cohort& cohort, const VectorStatistic& statistic,
                                   const std::vector<Direction>& directions, int B, std::uint64_t seed,
                                   int threads) {
    if (B < 1) throw InputError("B must be at least 1");
    PermutationResult r;
    r.observed = statistic(cohort);
    if (r.observed.size() != directions.size()) {
        throw InputError("one direction is required per statistic component");
    }
    r.B = B;
    r.seed = seed;

    // 1: at least as extreme, 0: not, -1: failed.
    std::vector<int> outcome(static_cast<std::size_t>(B), -1);
    detail::parallel_for(outcome.size(), threads, [&](std::size_t b) {
        Philox rng(seed, stream_id(StreamTag::permutation, b));
        std::vector<double> value;
        try {
            value = statistic(permute_arms(cohort, rng));
        } catch (const Error&) {
            return;
        }
        bool extreme = true;
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double obs = r.observed[k];
            switch (directions[k]) {
                case Direction::greater: extreme = extreme && value[k] >= obs; break;
                case Direction::less: extreme = extreme && value[k] <= obs; break;
                case Direction::two_sided: extreme = extreme && std::abs(value[k]) >= std::abs(obs); break;
            }
        }
        outcome[b] = extreme ? 1 : 0;
    });
    for (int o : outcome) {
        if (o < 0) {
            ++r.failures;
        } else {
            r.extreme += o;
        }
    }
    r.p_value = (r.extreme + 1.0) / (B - r.failures + 1.0);
    return r;
}

namespace {

double parse_number(const std::string& text, const std::string& spec) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw InputError("bad numeric argument in statistic '" + spec + "'");
    }
    return v;
}

Cohort prepared(const Cohort& c, std::optional<double> bin_width) { return bin_width ? bin_followup(c, *bin_width) : c; }

}  // namespace

NamedStatistic parse_statistic(const std::string& spec, const SolverOptions& opts, std::optional<double> bin_width) {
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    const bool has_arg = colon != std::string::npos;
    const double arg = has_arg ? parse_number(spec.substr(colon + 1), spec) : 0.0;
    auto need_arg = [&] {
        if (!has_arg) throw InputError("statistic '" + name + "' needs an argument, e.g. " + name + ":36");
    };
    auto no_arg = [&] {
        if (has_arg) throw InputError("statistic '" + name + "' takes no argument");
    };

    NamedStatistic st;
    st.id = spec;
    if (name == "rmst_diff") {
        need_arg();
        st.on_fit = [arg](const SccFit& f) { return rmst(f.s1, arg) - rmst(f.s0, arg); };
    } else if (name == "milestone_diff") {
        need_arg();
        st.on_fit = [arg](const SccFit& f) { return milestone_diff(f.s1, f.s0, arg); };
    } else if (name == "rrml_diff") {
        need_arg();
        st.on_fit = [arg](const SccFit& f) {
            const double t = std::min(f.theta_hat, arg);
            return rrml(f.s1, t, arg) - rrml(f.s0, t, arg);
        };
    } else if (name == "cond_surv_diff") {
        need_arg();
        st.on_fit = [arg](const SccFit& f) {
            if (arg < f.theta_hat) throw CrossingOutOfRangeError("conditional survival time precedes the crossing");
            return conditional_survival(f.s1, f.theta_hat, arg) - conditional_survival(f.s0, f.theta_hat, arg);
        };
    } else if (name == "surv_at_crossing") {
        no_arg();
        st.on_fit = [](const SccFit& f) { return surv_at_crossing(f); };
    } else if (name == "s1_at_crossing") {
        no_arg();
        st.on_fit = [](const SccFit& f) { return f.s1(f.theta_hat); };
    } else if (name == "theta") {
        no_arg();
        st.on_fit = [](const SccFit& f) { return f.theta_hat; };
    } else if (name == "ahr_pre" || name == "ahr_post") {
        no_arg();
        const bool pre = name == "ahr_pre";
        st.on_fit = [pre](const SccFit& f) {
            const auto r = avg_hazard_ratios(DiscreteHazards::from_fit(f), f.theta_hat);
            return pre ? r.first : r.second;
        };
    } else if (name == "ahr_pre_hazard" || name == "ahr_post_hazard") {
        no_arg();
        const bool pre = name == "ahr_pre_hazard";
        st.needs_fit = false;
        SolverOptions inner = opts;
        inner.threads = 1;
        st.on_cohort = [pre, inner, bin_width](const Cohort& c) {
            const auto f = scc_hazard_fit(prepared(c, bin_width), inner);
            const auto r = avg_hazard_ratios(DiscreteHazards::from_fit(f), f.theta_hat);
            return pre ? r.first : r.second;
        };
        return st;
    } else if (name == "km_rmst_diff" || name == "km_milestone_diff") {
        need_arg();
        const bool use_rmst = name == "km_rmst_diff";
        st.needs_fit = false;
        st.on_cohort = [use_rmst, arg, bin_width](const Cohort& c) {
            const auto grid = build_event_grid(prepared(c, bin_width));
            const auto s0 = kaplan_meier(grid, 0);
            const auto s1 = kaplan_meier(grid, 1);
            return use_rmst ? rmst(s1, arg) - rmst(s0, arg) : milestone_diff(s1, s0, arg);
        };
        return st;
    } else if (name == "constant") {
        need_arg();
        st.needs_fit = false;
        st.on_cohort = [arg](const Cohort&) { return arg; };
        return st;
    } else {
        throw InputError("unknown statistic '" + name + "'");
    }

    SolverOptions inner = opts;
    inner.threads = 1;
    st.on_cohort = [fn = st.on_fit, inner, bin_width](const Cohort& c) { return fn(scc_fit(prepared(c, bin_width), inner)); };
    return st;
}

VectorStatistic combine_statistics(const std::vector<NamedStatistic>& stats, const SolverOptions& opts,
                                   std::optional<double> bin_width) {
    SolverOptions inner = opts;
    inner.threads = 1;
    return [stats, inner, bin_width](const Cohort& c) {
        std::optional<SccFit> fit;
        std::vector<double> out;
        out.reserve(stats.size());
        for (const auto& st : stats) {
            if (st.needs_fit) {
                if (!fit) fit = scc_fit(prepared(c, bin_width), inner);
                out.push_back(st.on_fit(*fit));
            } else {
                out.push_back(st.on_cohort(c));
            }
        }
        return out;
    };
}

}  // namespace sccsurv
