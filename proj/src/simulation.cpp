#include "sccsurv/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>

#include <yaml-cpp/yaml.h>

#include "parallel.hpp"
#include "sccsurv/errors.hpp"
#include "sccsurv/profile_search.hpp"

namespace sccsurv {

void PiecewiseExp::validate() const {
    if (rates.size() != breakpoints.size() + 1) {
        throw InputError("a piecewise-exponential law needs one more rate than breakpoints");
    }
    for (double r : rates) {
        if (!(r > 0.0) || !std::isfinite(r)) throw InputError("piecewise-exponential rates must be positive");
    }
    double prev = 0.0;
    for (double b : breakpoints) {
        if (!(b > prev) || !std::isfinite(b)) throw InputError("breakpoints must be positive and increasing");
        prev = b;
    }
}

double PiecewiseExp::cumulative_hazard(double t) const {
    double h = 0.0;
    double start = 0.0;
    for (std::size_t k = 0; k < rates.size(); ++k) {
        const double end = k < breakpoints.size() ? breakpoints[k] : std::numeric_limits<double>::infinity();
        if (t <= end) return h + rates[k] * (t - start);
        h += rates[k] * (end - start);
        start = end;
    }
    return h;
}

double PiecewiseExp::inverse_cumulative_hazard(double target) const {
    double h = 0.0;
    double start = 0.0;
    for (std::size_t k = 0; k < rates.size(); ++k) {
        const double end = k < breakpoints.size() ? breakpoints[k] : std::numeric_limits<double>::infinity();
        const double piece = rates[k] * (end - start);
        if (target <= h + piece) return start + (target - h) / rates[k];
        h += piece;
        start = end;
    }
    return std::numeric_limits<double>::infinity();
}

double PiecewiseExp::integral(double a, double b) const {
    if (!(a >= 0.0) || b < a) throw InputError("integral requires 0 <= a <= b");
    double total = 0.0;
    double start = 0.0;
    for (std::size_t k = 0; k < rates.size() && start < b; ++k) {
        const double end = k < breakpoints.size() ? breakpoints[k] : std::numeric_limits<double>::infinity();
        const double lo = std::max(a, start);
        const double hi = std::min(b, end);
        if (hi > lo) total += std::exp(-cumulative_hazard(lo)) * -std::expm1(-rates[k] * (hi - lo)) / rates[k];
        start = end;
    }
    return total;
}

double pwexp_survival(const PiecewiseExp& dist, double t) {
    if (!(t >= 0.0)) throw InputError("survival time must be non-negative");
    return std::exp(-dist.cumulative_hazard(t));
}

double sample(const PiecewiseExp& dist, Philox& rng) { return dist.inverse_cumulative_hazard(rng.exponential()); }

namespace {

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

// Sign changes of D(t) = H_1(t) - H_0(t) on (0, horizon] and the sign D
// takes right after 0.
struct CrossingScan {
    int initial_sign = 0;
    std::vector<double> roots;
};

CrossingScan scan_crossings(const PiecewiseExp& dist0, const PiecewiseExp& dist1, double horizon) {
    std::set<double> knots{0.0, horizon};
    for (double b : dist0.breakpoints) {
        if (b < horizon) knots.insert(b);
    }
    for (double b : dist1.breakpoints) {
        if (b < horizon) knots.insert(b);
    }
    const std::vector<double> p(knots.begin(), knots.end());
    std::vector<double> d(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) d[i] = dist1.cumulative_hazard(p[i]) - dist0.cumulative_hazard(p[i]);

    CrossingScan scan;
    int current = 0;
    double zero_start = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        const int next = sign_of(d[i + 1]);
        if (next == 0) {
            if (sign_of(d[i]) != 0) zero_start = p[i + 1];
            continue;
        }
        if (current == 0) {
            current = next;
            scan.initial_sign = next;
        } else if (next != current) {
            const double root =
                sign_of(d[i]) == 0 ? zero_start : p[i] + d[i] / (d[i] - d[i + 1]) * (p[i + 1] - p[i]);
            scan.roots.push_back(root);
            current = next;
        }
    }
    return scan;
}

}  // namespace

std::vector<double> survival_crossings(const PiecewiseExp& dist0, const PiecewiseExp& dist1, double horizon) {
    dist0.validate();
    dist1.validate();
    if (!(horizon > 0.0)) throw InputError("horizon must be positive");
    return scan_crossings(dist0, dist1, horizon).roots;
}

ScenarioSpec make_scenario(std::string label, PiecewiseExp dist0, PiecewiseExp dist1, Censoring censoring,
                           double horizon, std::optional<double> declared_theta, std::optional<int> declared_gamma) {
    dist0.validate();
    dist1.validate();
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InputError("horizon must be positive");
    if (censoring.uniform && !(censoring.lo >= 0.0 && censoring.hi > censoring.lo)) {
        throw InputError("uniform censoring needs 0 <= lo < hi");
    }
    ScenarioSpec spec;
    spec.label = std::move(label);
    spec.censoring = censoring;
    spec.horizon = horizon;
    const auto scan = scan_crossings(dist0, dist1, horizon);
    spec.dist0 = std::move(dist0);
    spec.dist1 = std::move(dist1);

    if (scan.roots.size() > 1) {
        spec.single_crossing = false;
        if (declared_theta) throw InputError(spec.label + ": theta declared for a scenario with several crossings");
        return spec;
    }
    // D = H_1 - H_0 > 0 means the control arm survives longer.
    if (scan.roots.empty()) {
        spec.true_theta = 0.0;
        spec.true_gamma = scan.initial_sign > 0 ? -1 : 1;
    } else {
        spec.true_theta = scan.roots.front();
        spec.true_gamma = scan.initial_sign > 0 ? 1 : -1;
    }
    if (declared_theta && std::abs(*declared_theta - spec.true_theta) > 1e-9) {
        char buf[160];
        std::snprintf(buf, sizeof buf, ": declared theta %.10g but the survival curves cross at %.10g",
                      *declared_theta, spec.true_theta);
        throw InputError(spec.label + buf);
    }
    if (declared_gamma && *declared_gamma != spec.true_gamma) {
        throw InputError(spec.label + ": declared gamma disagrees with the analytic curves");
    }
    return spec;
}

EstimandReport true_estimands(const ScenarioSpec& spec, double tau, const std::vector<double>& milestones) {
    if (!(tau > 0.0)) throw InputError("tau must be positive");
    const auto& d0 = spec.dist0;
    const auto& d1 = spec.dist1;
    EstimandReport r;
    r.tau = tau;
    r.theta_hat = spec.true_theta;
    r.gamma_hat = spec.true_gamma;
    const double theta = spec.true_theta;
    if (spec.single_crossing) {
        r.values.emplace_back("theta", theta);
        r.values.emplace_back("gamma", spec.true_gamma);
        r.values.emplace_back("surv_at_crossing",
                              theta == 0.0 ? 1.0 : 0.5 * (pwexp_survival(d0, theta) + pwexp_survival(d1, theta)));
    }
    r.values.emplace_back(estimand_key("rmst_diff", tau), d1.integral(0.0, tau) - d0.integral(0.0, tau));
    if (spec.single_crossing) {
        const double t = std::min(theta, tau);
        r.values.emplace_back(estimand_key("rrml_diff", tau), d1.integral(t, tau) / pwexp_survival(d1, t) -
                                                                  d0.integral(t, tau) / pwexp_survival(d0, t));
    }
    for (double t : milestones) {
        r.values.emplace_back(estimand_key("milestone_diff", t), pwexp_survival(d1, t) - pwexp_survival(d0, t));
    }
    if (spec.single_crossing) {
        for (double t : milestones) {
            if (t < theta) continue;
            r.values.emplace_back(estimand_key("cond_surv_diff", t),
                                  pwexp_survival(d1, t) / pwexp_survival(d1, theta) -
                                      pwexp_survival(d0, t) / pwexp_survival(d0, theta));
        }
    }
    return r;
}

Cohort simulate_cohort(const ScenarioSpec& spec, std::size_t n, Philox& rng) {
    std::vector<Subject> subjects;
    subjects.reserve(n);
    const std::size_t n0 = n / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const int arm = i < n0 ? 0 : 1;
        const double t = sample(arm == 0 ? spec.dist0 : spec.dist1, rng);
        if (spec.censoring.uniform) {
            const double c = rng.uniform(spec.censoring.lo, spec.censoring.hi);
            subjects.push_back({std::min(t, c), t <= c, arm});
        } else {
            subjects.push_back({t, true, arm});
        }
    }
    return Cohort(std::move(subjects));
}

const MseCell* MseRow::find(const std::string& parameter) const {
    for (const auto& c : cells) {
        if (c.parameter == parameter) return &c;
    }
    return nullptr;
}

const MseRow* MseTable::find(const std::string& scenario, std::size_t n) const {
    for (const auto& r : rows) {
        if (r.scenario == scenario && r.n == n) return &r;
    }
    return nullptr;
}

namespace {

struct Parameter {
    std::string name;
    bool crossing_dependent;
    bool has_km;
};

std::vector<Parameter> parameter_set(const StudyConfig& config) {
    std::vector<Parameter> out{{estimand_key("rmst_diff", config.tau), false, true}};
    for (double t : config.milestones) out.push_back({estimand_key("milestone_diff", t), false, true});
    out.push_back({"theta", true, false});
    out.push_back({"surv_at_crossing", true, false});
    out.push_back({estimand_key("rrml_diff", config.tau), true, false});
    return out;
}

void validate_study(const StudyConfig& config) {
    if (config.scenarios.empty()) throw InputError("the study has no scenarios");
    if (config.scenarios.size() > 255) throw InputError("at most 255 scenarios per study");
    if (config.reps < 1) throw InputError("reps must be at least 1");
    if (config.ns.empty()) throw InputError("the study has no sample sizes");
    for (auto n : config.ns) {
        if (n < 2 || n > 65535) throw InputError("sample sizes must lie in [2, 65535]");
    }
    if (!(config.tau > 0.0)) throw InputError("tau must be positive");
    for (double t : config.milestones) {
        if (!(t >= 0.0)) throw InputError("milestones must be non-negative");
    }
    std::set<std::string> labels;
    for (const auto& s : config.scenarios) {
        if (!labels.insert(s.label).second) throw InputError("duplicate scenario label '" + s.label + "'");
    }
}

ReplicateRecord run_replicate(const StudyConfig& config, std::size_t scenario, std::size_t n, int rep,
                              std::size_t nparams) {
    const ScenarioSpec& spec = config.scenarios[scenario];
    const std::uint64_t stream = (static_cast<std::uint64_t>(scenario) << 48) |
                                 (static_cast<std::uint64_t>(n) << 32) | static_cast<std::uint32_t>(rep);
    ReplicateRecord rec;
    rec.scenario = spec.label;
    rec.scenario_index = scenario;
    rec.n = n;
    rec.rep = rep;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rec.scc.assign(nparams, nan);
    rec.km.assign(nparams, nan);

    Philox rng(config.seed, stream_id(StreamTag::simulation, stream));
    Cohort cohort = simulate_cohort(spec, n, rng);
    std::size_t events = 0;
    for (const auto& s : cohort.subjects()) events += s.event ? 1 : 0;
    rec.event_fraction = static_cast<double>(events) / static_cast<double>(n);
    if (config.bin_width) cohort = bin_followup(cohort, *config.bin_width);

    try {
        const EventGrid grid = build_event_grid(cohort);
        SolverOptions opts = config.solver;
        opts.threads = 1;
        const SccFit fit = scc_fit(grid, ConstraintKind::survival, opts);
        const StepSurvival km0 = kaplan_meier(grid, 0);
        const StepSurvival km1 = kaplan_meier(grid, 1);
        const double tau = config.tau;

        std::size_t k = 0;
        rec.scc[k] = rmst(fit.s1, tau) - rmst(fit.s0, tau);
        rec.km[k] = rmst(km1, tau) - rmst(km0, tau);
        ++k;
        for (double t : config.milestones) {
            rec.scc[k] = milestone_diff(fit.s1, fit.s0, t);
            rec.km[k] = milestone_diff(km1, km0, t);
            ++k;
        }
        rec.scc[k++] = fit.theta_hat;
        rec.scc[k++] = surv_at_crossing(fit);
        const double t = std::min(fit.theta_hat, tau);
        rec.scc[k++] = rrml(fit.s1, t, tau) - rrml(fit.s0, t, tau);
        rec.ok = true;
    } catch (const Error& e) {
        rec.ok = false;
        rec.error = e.what();
        std::fill(rec.scc.begin(), rec.scc.end(), nan);
        std::fill(rec.km.begin(), rec.km.end(), nan);
    }
    return rec;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_safe(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

std::vector<std::string> study_parameters(const StudyConfig& config) {
    std::vector<std::string> out;
    for (const auto& p : parameter_set(config)) out.push_back(p.name);
    return out;
}

MseTable run_mse_study(const StudyConfig& config) {
    validate_study(config);
    const auto params = parameter_set(config);
    const std::size_t np = params.size();

    MseTable table;
    table.parameters = study_parameters(config);
    for (const auto& s : config.scenarios) table.truths.push_back(true_estimands(s, config.tau, config.milestones));

    struct Task {
        std::size_t scenario;
        std::size_t n;
        int rep;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
        for (std::size_t n : config.ns) {
            for (int r = 0; r < config.reps; ++r) tasks.push_back({s, n, r});
        }
    }
    table.replicates.resize(tasks.size());
    detail::parallel_for(tasks.size(), config.threads, [&](std::size_t i) {
        const Task& t = tasks[i];
        table.replicates[i] = run_replicate(config, t.scenario, t.n, t.rep, np);
    });

    std::size_t i = 0;
    for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
        const auto& spec = config.scenarios[s];
        std::vector<double> truth(np, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t k = 0; k < np; ++k) {
            if (auto v = table.truths[s].get(params[k].name)) truth[k] = *v;
        }
        for (std::size_t n : config.ns) {
            MseRow row;
            row.scenario = spec.label;
            row.n = n;
            row.reps = config.reps;
            std::vector<double> scc(np, 0.0), km(np, 0.0);
            int ok = 0;
            double events = 0.0;
            for (int r = 0; r < config.reps; ++r, ++i) {
                const auto& rec = table.replicates[i];
                events += rec.event_fraction;
                if (!rec.ok) {
                    ++row.failures;
                    continue;
                }
                ++ok;
                for (std::size_t k = 0; k < np; ++k) {
                    scc[k] += (rec.scc[k] - truth[k]) * (rec.scc[k] - truth[k]);
                    if (params[k].has_km) km[k] += (rec.km[k] - truth[k]) * (rec.km[k] - truth[k]);
                }
            }
            row.event_fraction = events / config.reps;
            for (std::size_t k = 0; k < np; ++k) {
                MseCell cell;
                cell.parameter = params[k].name;
                cell.crossing_dependent = params[k].crossing_dependent;
                const bool defined = ok > 0 && !(params[k].crossing_dependent && !spec.single_crossing);
                if (defined) cell.scc = scc[k] / ok;
                if (defined && params[k].has_km) cell.km = km[k] / ok;
                row.cells.push_back(cell);
            }
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

void write_mse_csv(std::ostream& out, const MseTable& table) {
    out << "scenario,n,reps,failures,event_fraction";
    if (table.rows.empty()) {
        out << '\n';
        return;
    }
    for (const auto& c : table.rows.front().cells) {
        out << ',' << c.parameter << "_scc";
        if (!c.crossing_dependent) out << ',' << c.parameter << "_km";
    }
    out << '\n';
    for (const auto& row : table.rows) {
        out << csv_safe(row.scenario) << ',' << row.n << ',' << row.reps << ',' << row.failures << ','
            << format_number(row.event_fraction);
        for (const auto& c : row.cells) {
            out << ',' << (c.scc ? format_number(*c.scc) : "NA");
            if (!c.crossing_dependent) out << ',' << (c.km ? format_number(*c.km) : "NA");
        }
        out << '\n';
    }
}

void write_replicate_log(std::ostream& out, const MseTable& table) {
    out << "scenario,n,rep,ok,event_fraction";
    const std::size_t np = table.parameters.size();
    // KM columns exist for the parameters that do not depend on the crossing.
    std::vector<bool> has_km(np, false);
    if (!table.rows.empty()) {
        for (std::size_t k = 0; k < np; ++k) has_km[k] = !table.rows.front().cells[k].crossing_dependent;
    }
    for (std::size_t k = 0; k < np; ++k) {
        const auto& p = table.parameters[k];
        out << ',' << p << "_scc";
        if (has_km[k]) out << ',' << p << "_km";
        out << ',' << p << "_true";
    }
    out << ",error\n";

    for (const auto& rec : table.replicates) {
        const EstimandReport& truth = table.truths[rec.scenario_index];
        out << csv_safe(rec.scenario) << ',' << rec.n << ',' << rec.rep << ',' << (rec.ok ? 1 : 0) << ','
            << format_number(rec.event_fraction);
        for (std::size_t k = 0; k < np; ++k) {
            out << ',' << format_number(rec.scc[k]);
            if (has_km[k]) out << ',' << format_number(rec.km[k]);
            const auto t = truth.get(table.parameters[k]);
            out << ',' << (t ? format_number(*t) : "NA");
        }
        out << ',' << csv_safe(rec.error) << '\n';
    }
}

namespace {

namespace fs = std::filesystem;

void check_keys(const YAML::Node& node, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw InputError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T get(const YAML::Node& node, const char* key, const std::string& where) {
    if (!node[key]) throw InputError(where + ": missing key '" + key + "'");
    try {
        return node[key].as<T>();
    } catch (const YAML::Exception&) {
        throw InputError(where + ": bad value for '" + key + "'");
    }
}

PiecewiseExp parse_arm(const YAML::Node& node, const std::string& where) {
    if (!node.IsMap()) throw InputError(where + ": expected a map with breakpoints and rates");
    check_keys(node, {"breakpoints", "rates"}, where);
    PiecewiseExp d;
    if (node["breakpoints"]) d.breakpoints = get<std::vector<double>>(node, "breakpoints", where);
    d.rates = get<std::vector<double>>(node, "rates", where);
    try {
        d.validate();
    } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
    }
    return d;
}

const std::initializer_list<const char*> kScenarioKeys = {"label", "note",  "arm0",  "arm1",
                                                          "censoring", "horizon", "theta", "gamma"};
const std::initializer_list<const char*> kStudyKeys = {"seed",       "reps",      "ns",       "tau",
                                                       "milestones", "bin_width", "scenarios"};

ScenarioSpec parse_scenario(const YAML::Node& node, const std::string& where) {
    const std::string label = get<std::string>(node, "label", where);
    Censoring cens;
    if (const auto c = node["censoring"]) {
        if (c.IsScalar() && c.as<std::string>() == "none") {
            cens.uniform = false;
        } else {
            check_keys(c, {"type", "lo", "hi"}, where + " censoring");
            const auto type = c["type"] ? c["type"].as<std::string>() : std::string("uniform");
            if (type == "none") {
                cens.uniform = false;
            } else if (type == "uniform") {
                cens.lo = get<double>(c, "lo", where + " censoring");
                cens.hi = get<double>(c, "hi", where + " censoring");
            } else {
                throw InputError(where + ": censoring type must be uniform or none");
            }
        }
    }
    double horizon = cens.hi;
    if (node["horizon"]) {
        horizon = get<double>(node, "horizon", where);
    } else if (!cens.uniform) {
        throw InputError(where + ": a horizon is required without censoring");
    }
    std::optional<double> theta;
    if (node["theta"] && !node["theta"].IsNull()) theta = get<double>(node, "theta", where);
    std::optional<int> gamma;
    if (node["gamma"] && !node["gamma"].IsNull()) gamma = get<int>(node, "gamma", where);
    auto spec = make_scenario(label, parse_arm(node["arm0"], where + " arm0"), parse_arm(node["arm1"], where + " arm1"),
                              cens, horizon, theta, gamma);
    if (node["note"]) spec.note = get<std::string>(node, "note", where);
    return spec;
}

YAML::Node load_yaml(const std::string& path) {
    try {
        return YAML::LoadFile(path);
    } catch (const YAML::BadFile&) {
        throw InputError("cannot open config '" + path + "'");
    } catch (const YAML::Exception& e) {
        throw InputError("malformed config '" + path + "': " + e.what());
    }
}

}  // namespace

ScenarioSpec load_scenario_file(const std::string& path) {
    const YAML::Node node = load_yaml(path);
    if (!node.IsMap()) throw InputError(path + ": expected a map");
    std::vector<const char*> keys(kScenarioKeys);
    keys.insert(keys.end(), kStudyKeys.begin(), kStudyKeys.end());
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return key == a; })) {
            throw InputError(path + ": unknown key '" + key + "'");
        }
    }
    return parse_scenario(node, path);
}

StudyConfig load_study_config(const std::string& path) {
    const YAML::Node node = load_yaml(path);
    if (!node.IsMap()) throw InputError(path + ": expected a map");
    StudyConfig config;
    config.sources.push_back(path);
    if (node["arm0"]) {
        config.scenarios.push_back(load_scenario_file(path));
    } else {
        check_keys(node, kStudyKeys, path);
        const auto list = node["scenarios"];
        if (!list || !list.IsSequence()) throw InputError(path + ": 'scenarios' must be a list");
        const fs::path base = fs::path(path).parent_path();
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string where = path + " scenario " + std::to_string(i + 1);
            if (list[i].IsScalar()) {
                const std::string file = (base / list[i].as<std::string>()).string();
                config.scenarios.push_back(load_scenario_file(file));
                config.sources.push_back(file);
            } else {
                check_keys(list[i], kScenarioKeys, where);
                config.scenarios.push_back(parse_scenario(list[i], where));
            }
        }
    }
    if (node["seed"]) config.seed = get<std::uint64_t>(node, "seed", path);
    if (node["reps"]) config.reps = get<int>(node, "reps", path);
    if (node["ns"]) config.ns = get<std::vector<std::size_t>>(node, "ns", path);
    if (node["tau"]) config.tau = get<double>(node, "tau", path);
    if (node["milestones"]) config.milestones = get<std::vector<double>>(node, "milestones", path);
    if (node["bin_width"] && !node["bin_width"].IsNull()) {
        const double w = get<double>(node, "bin_width", path);
        if (!(w > 0.0)) throw InvalidWidthError(path + ": bin_width must be positive");
        config.bin_width = w;
    }
    return config;
}

}  // namespace sccsurv
