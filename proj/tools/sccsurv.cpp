#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "sccsurv/errors.hpp"
#include "sccsurv/estimands.hpp"
#include "sccsurv/hazard_crossing.hpp"
#include "sccsurv/inference.hpp"
#include "sccsurv/profile_search.hpp"
#include "sccsurv/simulation.hpp"
#include "sccsurv/survival_data.hpp"

#ifndef SCCSURV_VERSION
#define SCCSURV_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace sccsurv;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char byte[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof byte, "%02x", digest[i]);
        hex += byte;
    }
    return hex;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << content;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory '" + dir.string() + "'");
}

struct Manifest {
    ordered_json j;
    explicit Manifest(const std::string& command) {
        j["command"] = command;
        j["tool_version"] = SCCSURV_VERSION;
        j["inputs"] = ordered_json::array();
        j["options"] = ordered_json::object();
        j["started_at"] = utc_now();
    }
    void input(const std::string& path) { j["inputs"].push_back({{"path", path}, {"sha256", sha256_file(path)}}); }
    void write(const fs::path& path) {
        j["finished_at"] = utc_now();
        write_file(path, j.dump(2) + "\n");
    }
};

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

struct Common {
    int threads = 1;
    double tol = 1e-7;
    int max_iter = 500;
    std::optional<double> bin_width;

    void add(CLI::App* app, bool binning = true) {
        app->add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
        app->add_option("--tol", tol, "KKT tolerance of the conditional fits")->check(CLI::PositiveNumber);
        app->add_option("--max-iter", max_iter, "Iteration limit of the conditional fits")->check(CLI::PositiveNumber);
        if (binning) app->add_option("--bin-width", bin_width, "Round follow-up times to bins of this width");
    }
    SolverOptions solver() const { return {tol, max_iter, threads}; }
    void record(Manifest& m) const {
        m.j["options"]["threads"] = threads;
        m.j["options"]["tol"] = tol;
        m.j["options"]["max_iter"] = max_iter;
        m.j["options"]["bin_width"] = optional_json(bin_width);
    }
    Cohort load(const std::string& path) const {
        Cohort c = read_cohort_csv_file(path);
        return bin_width ? bin_followup(c, *bin_width) : c;
    }
};

// ---- fit ----

struct FitArgs {
    std::string input;
    std::string constraint = "survival";
    std::string out;
    double span = 2.0 / 3.0;
    std::size_t points = 200;
    Common common;
};

std::string curves_csv(const SccFit& fit) {
    std::string s = "time,S0,S1,u0,u1\n";
    for (std::size_t j = 0; j < fit.grid.size(); ++j) {
        s += fmt17(fit.grid.times[j]) + ',' + fmt17(fit.s0.values()[j]) + ',' + fmt17(fit.s1.values()[j]) + ',' +
             fmt17(fit.fit.u0[j]) + ',' + fmt17(fit.fit.u1[j]) + '\n';
    }
    return s;
}

std::string profile_csv(const SccFit& fit) {
    std::string s = "theta,gamma,loglik\n";
    for (const auto& e : fit.profile) s += fmt17(e.theta) + ',' + std::to_string(e.gamma) + ',' + fmt17(e.loglik) + '\n';
    return s;
}

int run_fit(const FitArgs& a) {
    Manifest manifest("fit");
    const Cohort cohort = a.common.load(a.input);
    const SolverOptions opts = a.common.solver();
    const bool hazard = a.constraint == "hazard";
    const SccFit fit = hazard ? scc_hazard_fit(cohort, opts) : scc_fit(cohort, opts);

    ordered_json info;
    info["constraint"] = a.constraint;
    info["theta_hat"] = fit.theta_hat;
    info["gamma_hat"] = fit.gamma_hat;
    info["loglik"] = fit.loglik;
    info["converged"] = fit.fit.converged;
    info["kkt_residual"] = fit.fit.kkt_residual;
    info["iterations"] = fit.fit.iterations;
    info["grid_size"] = fit.grid.size();
    info["n"] = cohort.size();
    info["bin_width"] = optional_json(a.common.bin_width);
    ordered_json warnings = ordered_json::array();

    std::string smoothed;
    if (hazard) {
        try {
            SmoothedHazards sm = smooth_hazards(DiscreteHazards::from_fit(fit), a.span, a.points);
            std::ostringstream os;
            write_smoothed_csv(os, sm);
            smoothed = os.str();
            info["smoothed_single_crossing"] = sm.single_crossing;
            info["smoothed_first_violation"] = optional_json(sm.first_violation);
        } catch (const DegenerateWindowError& e) {
            warnings.push_back(std::string("hazard smoothing skipped: ") + e.what());
        }
    }
    info["warnings"] = warnings;

    const fs::path dir(a.out);
    ensure_dir(dir);
    write_file(dir / "curves.csv", curves_csv(fit));
    write_file(dir / "profile.csv", profile_csv(fit));
    write_file(dir / "fit.json", info.dump(2) + "\n");
    if (hazard) {
        const auto h = DiscreteHazards::from_fit(fit);
        std::string s = "time,h0,h1\n";
        for (std::size_t j = 0; j < h.size(); ++j) s += fmt17(h.times[j]) + ',' + fmt17(h.h0[j]) + ',' + fmt17(h.h1[j]) + '\n';
        write_file(dir / "hazards.csv", s);
        if (!smoothed.empty()) write_file(dir / "smoothed_hazards.csv", smoothed);
    }
    manifest.input(a.input);
    manifest.j["options"]["constraint"] = a.constraint;
    manifest.j["options"]["smooth_span"] = a.span;
    manifest.j["options"]["smooth_points"] = a.points;
    a.common.record(manifest);
    manifest.write(dir / "manifest.json");
    return 0;
}

// ---- estimands ----

struct EstimandArgs {
    std::string fit_dir;
    std::optional<double> tau;
    std::vector<double> milestones;
    std::string hazard_source = "survival";
    std::string hazard_fit_dir;
    std::string out;
};

std::vector<std::vector<double>> read_numeric_csv(const fs::path& path, const std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw InputError("missing fit artifact '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    std::string expected;
    for (std::size_t i = 0; i < header.size(); ++i) expected += (i ? "," : "") + header[i];
    if (line != expected) throw InputError("'" + path.string() + "' does not have the header " + expected);
    std::vector<std::vector<double>> cols(header.size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (!std::getline(ss, cell, ',')) throw InputError("short row in '" + path.string() + "'");
            try {
                std::size_t used = 0;
                cols[i].push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::logic_error&) {
                throw InputError("bad number '" + cell + "' in '" + path.string() + "'");
            }
        }
    }
    return cols;
}

ordered_json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("missing fit artifact '" + path.string() + "'");
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::exception&) {
        throw InputError("malformed '" + path.string() + "'");
    }
}

SccFit load_fit(const fs::path& dir) {
    const ordered_json info = read_json(dir / "fit.json");
    const auto cols = read_numeric_csv(dir / "curves.csv", {"time", "S0", "S1", "u0", "u1"});
    SccFit fit;
    try {
        fit.kind = info.at("constraint").get<std::string>() == "hazard" ? ConstraintKind::hazard : ConstraintKind::survival;
        fit.theta_hat = info.at("theta_hat").get<double>();
        fit.gamma_hat = info.at("gamma_hat").get<int>();
        fit.loglik = info.at("loglik").get<double>();
    } catch (const nlohmann::json::exception&) {
        throw InputError("incomplete '" + (dir / "fit.json").string() + "'");
    }
    fit.grid.times = cols[0];
    fit.s0 = StepSurvival::from_values(cols[0], cols[1]);
    fit.s1 = StepSurvival::from_values(cols[0], cols[2]);
    fit.fit.u0 = cols[3];
    fit.fit.u1 = cols[4];
    fit.fit.loglik = fit.loglik;
    fit.fit.converged = true;
    return fit;
}

int run_estimands(const EstimandArgs& a) {
    Manifest manifest("estimands");
    const fs::path dir(a.fit_dir);
    const SccFit fit = load_fit(dir);
    EstimandOptions opts;
    opts.tau = a.tau;
    opts.milestones = a.milestones;
    if (a.hazard_source == "hazard") {
        if (fit.kind == ConstraintKind::hazard) {
            opts.hazards = DiscreteHazards::from_fit(fit);
            opts.hazard_theta = fit.theta_hat;
        } else {
            if (a.hazard_fit_dir.empty()) {
                throw InputError("--hazard-source hazard needs --hazard-fit-dir for a survival-constrained fit");
            }
            const SccFit hfit = load_fit(a.hazard_fit_dir);
            if (hfit.kind != ConstraintKind::hazard) throw InputError("--hazard-fit-dir must hold a hazard fit");
            opts.hazards = DiscreteHazards::from_fit(hfit);
            opts.hazard_theta = hfit.theta_hat;
        }
    }
    const EstimandReport report = compute_estimands(fit, opts);

    const fs::path out = a.out.empty() ? dir : fs::path(a.out);
    ensure_dir(out);
    write_file(out / "estimands.json", report_to_json(report));
    std::ostringstream csv;
    write_report_csv(csv, report);
    write_file(out / "estimands.csv", csv.str());

    for (const char* f : {"fit.json", "curves.csv"}) manifest.input((dir / f).string());
    if (!a.hazard_fit_dir.empty()) {
        for (const char* f : {"fit.json", "curves.csv"}) manifest.input((fs::path(a.hazard_fit_dir) / f).string());
    }
    manifest.j["options"]["tau"] = report.tau;
    manifest.j["options"]["tau_defaulted"] = !a.tau.has_value();
    manifest.j["options"]["milestones"] = a.milestones;
    manifest.j["options"]["hazard_source"] = a.hazard_source;
    manifest.write(out / "manifest_estimands.json");
    return 0;
}

// ---- bootstrap ----

struct BootstrapArgs {
    std::string input;
    std::string estimand;
    int B = 1000;
    double level = 0.95;
    std::optional<std::uint64_t> seed;
    std::string out;
    Common common;
};

std::uint64_t require_seed(const std::optional<std::uint64_t>& seed) {
    if (!seed) throw InputError("--seed is required");
    return *seed;
}

int run_bootstrap(const BootstrapArgs& a) {
    const std::uint64_t seed = require_seed(a.seed);
    Manifest manifest("bootstrap");
    const Cohort cohort = a.common.load(a.input);
    const NamedStatistic stat = parse_statistic(a.estimand, a.common.solver());
    const BootstrapResult r =
        stratified_bootstrap(cohort, stat.on_cohort, a.B, a.level, seed, a.common.threads, stat.id);

    ordered_json j;
    j["estimand"] = r.estimand;
    j["point"] = r.point;
    j["ci_lower"] = r.ci_lower;
    j["ci_upper"] = r.ci_upper;
    j["level"] = r.level;
    j["B"] = r.B;
    j["seed"] = r.seed;
    j["failures"] = r.failures;
    j["warnings"] = r.warnings;
    j["replicates"] = r.replicates;

    const fs::path dir(a.out);
    ensure_dir(dir);
    write_file(dir / "bootstrap.json", j.dump(2) + "\n");
    manifest.input(a.input);
    manifest.j["seed"] = seed;
    manifest.j["options"]["estimand"] = a.estimand;
    manifest.j["options"]["B"] = a.B;
    manifest.j["options"]["level"] = a.level;
    a.common.record(manifest);
    manifest.write(dir / "manifest.json");
    return 0;
}

// ---- test ----

struct TestArgs {
    std::string input;
    std::string type;
    std::string phi;
    std::optional<double> phi_star;
    std::optional<double> theta_star;
    std::optional<double> p_star;
    std::vector<std::string> stats;
    std::vector<std::string> directions;
    int B = 1000;
    double level = 0.95;
    std::optional<std::uint64_t> seed;
    std::string out;
    Common common;
};

ordered_json joint_json(const JointTestResult& r, const std::string& threshold_name) {
    ordered_json j;
    j["eta"] = r.eta;
    j["ci_lower"] = r.ci_lower;
    j["reject"] = r.reject;
    j["phi_star"] = r.phi_star;
    j[threshold_name] = r.threshold;
    j["level"] = r.level;
    j["B"] = r.B;
    j["seed"] = r.seed;
    j["failures"] = r.failures;
    j["warnings"] = r.warnings;
    j["replicates"] = r.replicates;
    return j;
}

int run_test(const TestArgs& a) {
    const std::uint64_t seed = require_seed(a.seed);
    Manifest manifest("test");
    const Cohort cohort = a.common.load(a.input);
    const SolverOptions opts = a.common.solver();
    ordered_json j;
    j["type"] = a.type;

    if (a.type == "theta" || a.type == "surv") {
        if (a.phi.empty() || !a.phi_star) throw InputError("--phi and --phi-star are required");
        const NamedStatistic phi = parse_statistic(a.phi, opts);
        if (!phi.needs_fit) throw InputError("--phi must be computed from the constrained fit");
        j["phi"] = phi.id;
        if (a.type == "theta") {
            if (!a.theta_star) throw InputError("--theta-star is required");
            const auto r = joint_test_theta(cohort, phi.on_fit, *a.phi_star, *a.theta_star, a.B, a.level, seed, opts,
                                            a.common.threads);
            j.update(joint_json(r, "theta_star"));
        } else {
            if (!a.p_star) throw InputError("--p-star is required");
            const auto r = joint_test_surv(cohort, phi.on_fit, *a.phi_star, *a.p_star, a.B, a.level, seed, opts,
                                           a.common.threads);
            j.update(joint_json(r, "p_star"));
        }
    } else {
        if (a.stats.empty()) throw InputError("--stat is required for a permutation test");
        std::vector<NamedStatistic> stats;
        for (const auto& s : a.stats) stats.push_back(parse_statistic(s, opts));
        std::vector<Direction> dirs;
        if (a.directions.empty()) {
            dirs.assign(stats.size(), Direction::greater);
        } else if (a.directions.size() == stats.size()) {
            for (const auto& d : a.directions) dirs.push_back(parse_direction(d));
        } else {
            throw InputError("give one --direction per --stat");
        }
        const auto r = permutation_test(cohort, combine_statistics(stats, opts), dirs, a.B, seed, a.common.threads);
        ordered_json names = ordered_json::array();
        ordered_json dnames = ordered_json::array();
        for (std::size_t k = 0; k < stats.size(); ++k) {
            names.push_back(stats[k].id);
            dnames.push_back(direction_name(dirs[k]));
        }
        j["statistics"] = names;
        j["directions"] = dnames;
        j["observed"] = r.observed;
        j["p_value"] = r.p_value;
        j["extreme"] = r.extreme;
        j["B"] = r.B;
        j["seed"] = r.seed;
        j["failures"] = r.failures;
    }

    const fs::path dir(a.out);
    ensure_dir(dir);
    write_file(dir / "test.json", j.dump(2) + "\n");
    manifest.input(a.input);
    manifest.j["seed"] = seed;
    auto& o = manifest.j["options"];
    o["type"] = a.type;
    o["phi"] = a.phi;
    o["phi_star"] = optional_json(a.phi_star);
    o["theta_star"] = optional_json(a.theta_star);
    o["p_star"] = optional_json(a.p_star);
    o["stats"] = a.stats;
    o["directions"] = a.directions;
    o["B"] = a.B;
    o["level"] = a.level;
    a.common.record(manifest);
    manifest.write(dir / "manifest.json");
    return 0;
}

// ---- simulate ----

struct SimulateArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
    std::vector<std::size_t> ns;
    Common common;
};

int run_simulate(const SimulateArgs& a) {
    const std::uint64_t seed = require_seed(a.seed);
    Manifest manifest("simulate");
    StudyConfig cfg = load_study_config(a.config);
    cfg.seed = seed;
    if (a.reps) cfg.reps = *a.reps;
    if (!a.ns.empty()) cfg.ns = a.ns;
    if (a.common.bin_width) cfg.bin_width = a.common.bin_width;
    cfg.solver = a.common.solver();
    cfg.threads = a.common.threads;
    const MseTable table = run_mse_study(cfg);

    ordered_json truths = ordered_json::array();
    for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
        const auto& spec = cfg.scenarios[s];
        ordered_json t;
        t["scenario"] = spec.label;
        t["note"] = spec.note;
        t["single_crossing"] = spec.single_crossing;
        ordered_json values = ordered_json::object();
        for (const auto& [k, v] : table.truths[s].values) values[k] = v;
        t["estimands"] = values;
        truths.push_back(t);
    }

    const fs::path dir(a.out);
    ensure_dir(dir);
    std::ostringstream mse, log;
    write_mse_csv(mse, table);
    write_replicate_log(log, table);
    write_file(dir / "mse.csv", mse.str());
    write_file(dir / "replicates.csv", log.str());
    write_file(dir / "truths.json", truths.dump(2) + "\n");
    for (const auto& src : cfg.sources) manifest.input(src);
    manifest.j["seed"] = seed;
    manifest.j["options"]["reps"] = cfg.reps;
    manifest.j["options"]["ns"] = cfg.ns;
    manifest.j["options"]["tau"] = cfg.tau;
    manifest.j["options"]["milestones"] = cfg.milestones;
    a.common.record(manifest);
    manifest.j["options"]["bin_width"] = optional_json(cfg.bin_width);
    manifest.write(dir / "manifest.json");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-crossing constrained survival estimation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SCCSURV_VERSION);

    FitArgs fit;
    auto* cfit = app.add_subcommand("fit", "Profile-likelihood single-crossing fit");
    cfit->add_option("input", fit.input, "CSV with columns time,event,arm")->required();
    cfit->add_option("--constraint", fit.constraint)->check(CLI::IsMember({"survival", "hazard"}));
    cfit->add_option("--out", fit.out, "Output directory")->required();
    cfit->add_option("--smooth-span", fit.span, "LOWESS span for hazard fits")->check(CLI::Range(0.0, 1.0));
    cfit->add_option("--smooth-points", fit.points, "Evaluation points of the smoothed hazards");
    fit.common.add(cfit);

    EstimandArgs est;
    auto* cest = app.add_subcommand("estimands", "Estimands from a fit directory");
    cest->add_option("fitdir", est.fit_dir)->required();
    cest->add_option("--tau", est.tau, "Restriction time (default: last grid time)");
    cest->add_option("--milestones", est.milestones)->delimiter(',');
    cest->add_option("--hazard-source", est.hazard_source)->check(CLI::IsMember({"survival", "hazard"}));
    cest->add_option("--hazard-fit-dir", est.hazard_fit_dir, "Hazard-constrained fit used for the hazard ratios");
    cest->add_option("--out", est.out, "Output directory (default: the fit directory)");

    BootstrapArgs boot;
    auto* cboot = app.add_subcommand("bootstrap", "Stratified bootstrap percentile interval");
    cboot->add_option("input", boot.input)->required();
    cboot->add_option("--estimand", boot.estimand, "Statistic, e.g. rmst_diff:36")->required();
    cboot->add_option("--B", boot.B)->check(CLI::PositiveNumber);
    cboot->add_option("--level", boot.level)->check(CLI::Range(0.0, 1.0));
    cboot->add_option("--seed", boot.seed);
    cboot->add_option("--out", boot.out)->required();
    boot.common.add(cboot);

    TestArgs test;
    auto* ctest = app.add_subcommand("test", "Joint bootstrap tests and permutation tests");
    ctest->add_option("input", test.input)->required();
    ctest->add_option("--type", test.type)->required()->check(CLI::IsMember({"theta", "surv", "perm"}));
    ctest->add_option("--phi", test.phi, "Efficacy statistic of the joint tests");
    ctest->add_option("--phi-star", test.phi_star);
    ctest->add_option("--theta-star", test.theta_star);
    ctest->add_option("--p-star", test.p_star);
    ctest->add_option("--stat", test.stats, "Permutation statistic (repeatable)");
    ctest->add_option("--direction", test.directions, "greater, less or two_sided per --stat");
    ctest->add_option("--B", test.B)->check(CLI::PositiveNumber);
    ctest->add_option("--level", test.level)->check(CLI::Range(0.0, 1.0));
    ctest->add_option("--seed", test.seed);
    ctest->add_option("--out", test.out)->required();
    test.common.add(ctest);

    SimulateArgs sim;
    auto* csim = app.add_subcommand("simulate", "Piecewise-exponential MSE study");
    csim->add_option("config", sim.config, "YAML study or scenario file")->required();
    csim->add_option("--out", sim.out)->required();
    csim->add_option("--seed", sim.seed);
    csim->add_option("--reps", sim.reps)->check(CLI::PositiveNumber);
    csim->add_option("--ns", sim.ns)->delimiter(',');
    sim.common.add(csim);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (*cfit) return run_fit(fit);
        if (*cest) return run_estimands(est);
        if (*cboot) return run_bootstrap(boot);
        if (*ctest) return run_test(test);
        if (*csim) return run_simulate(sim);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSolver;
    }
    return 0;
}
