#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sccsurv/constrained_mle.hpp"
#include "sccsurv/profile_search.hpp"
#include "sccsurv/rng.hpp"
#include "sccsurv/survival_data.hpp"

namespace sccsurv {

using CohortStatistic = std::function<double(const Cohort&)>;
using FitStatistic = std::function<double(const SccFit&)>;

// Failed bootstrap replicates above this fraction of B raise a warning.
inline constexpr double kFailureWarnFraction = 0.01;

// Type-7 quantile (linear interpolation between order statistics) of sorted data.
double quantile_type7(const std::vector<double>& sorted, double p);

// Draws n_a subjects with replacement within each arm a.
Cohort resample_stratified(const Cohort& cohort, Philox& rng);

// Random relabelling of arms that keeps the arm sizes.
Cohort permute_arms(const Cohort& cohort, Philox& rng);

struct BootstrapResult {
    std::string estimand;
    double point = 0.0;
    std::vector<double> replicates;  // successful replicates in replicate order
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double level = 0.95;
    std::uint64_t seed = 0;
    int B = 0;
    int failures = 0;
    std::vector<std::string> warnings;
};

// Percentile interval from B stratified resamples. Replicates whose
// statistic throws an sccsurv::Error (an arm without events, solver failure,
// undefined estimand) are excluded and counted in `failures`.
BootstrapResult stratified_bootstrap(const Cohort& cohort, const CohortStatistic& statistic, int B, double level,
                                     std::uint64_t seed, int threads = 1, const std::string& estimand = "");

struct JointTestResult {
    double eta = 0.0;       // observed eta_1 or eta_2
    double ci_lower = 0.0;  // one-sided lower bound at the given level
    bool reject = false;    // ci_lower > 0
    double phi_star = 0.0;
    double threshold = 0.0;  // theta* or p*
    double level = 0.95;
    int B = 0;
    std::uint64_t seed = 0;
    int failures = 0;
    std::vector<double> replicates;
    std::vector<std::string> warnings;
};

// H0: phi <= phi* or theta >= theta*, through eta_1 = min(phi - phi*, theta* - theta).
JointTestResult joint_test_theta(const Cohort& cohort, const FitStatistic& phi, double phi_star, double theta_star,
                                 int B, double level, std::uint64_t seed, const SolverOptions& opts = {},
                                 int threads = 1);

// H0: phi <= phi* or S_1(theta) <= p*, through eta_2 = min(phi - phi*, S_1(theta) - p*).
JointTestResult joint_test_surv(const Cohort& cohort, const FitStatistic& phi, double phi_star, double p_star, int B,
                                double level, std::uint64_t seed, const SolverOptions& opts = {}, int threads = 1);

enum class Direction { greater, less, two_sided };

Direction parse_direction(const std::string& s);
const char* direction_name(Direction d);

struct PermutationResult {
    std::vector<double> observed;
    double p_value = 1.0;
    int B = 0;
    int extreme = 0;  // permutations at least as extreme in every component
    int failures = 0;
    std::uint64_t seed = 0;
};

using VectorStatistic = std::function<std::vector<double>(const Cohort&)>;

// Monte Carlo permutation p-value (extreme + 1) / (B_ok + 1). A permuted
// statistic counts as at least as extreme when every component is, each in
// its own direction.
PermutationResult permutation_test(const Cohort& cohort, const VectorStatistic& statistic,
                                   const std::vector<Direction>& directions, int B, std::uint64_t seed,
                                   int threads = 1);

// Named statistics used by the command line, e.g. "rmst_diff:36",
// "milestone_diff:12", "rrml_diff:36", "cond_surv_diff:24", "surv_at_crossing",
// "theta", "s1_at_crossing", "ahr_pre", "ahr_post", "km_rmst_diff:36",
// "constant:1". Throws InputError for unknown names.
struct NamedStatistic {
    std::string id;
    bool needs_fit = true;
    FitStatistic on_fit;        // when needs_fit
    CohortStatistic on_cohort;  // full pipeline from a cohort
};

NamedStatistic parse_statistic(const std::string& spec, const SolverOptions& opts = {},
                               std::optional<double> bin_width = std::nullopt);

// Evaluates several statistics on a cohort with at most one survival fit.
VectorStatistic combine_statistics(const std::vector<NamedStatistic>& stats, const SolverOptions& opts = {},
                                   std::optional<double> bin_width = std::nullopt);

}  // namespace sccsurv
