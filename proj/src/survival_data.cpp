#include "sccsurv/survival_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "sccsurv/errors.hpp"

namespace sccsurv {

Cohort::Cohort(std::vector<Subject> subjects) : subjects_(std::move(subjects)) {
    for (const auto& s : subjects_) {
        if (!std::isfinite(s.time)) throw InputError("follow-up time must be finite");
        if (s.time < 0.0) throw NegativeTimeError("follow-up time must be non-negative");
        if (s.arm != 0 && s.arm != 1) throw InputError("arm must be 0 or 1");
    }
}

std::size_t Cohort::arm_size(int arm) const {
    return static_cast<std::size_t>(
        std::count_if(subjects_.begin(), subjects_.end(), [arm](const Subject& s) { return s.arm == arm; }));
}

std::size_t Cohort::arm_events(int arm) const {
    return static_cast<std::size_t>(std::count_if(
        subjects_.begin(), subjects_.end(), [arm](const Subject& s) { return s.arm == arm && s.event; }));
}

StepSurvival StepSurvival::from_logjumps(std::vector<double> times, std::span<const double> logjumps) {
    if (times.size() != logjumps.size()) throw DimensionMismatchError("times and log-jumps differ in length");
    StepSurvival s;
    s.values_.resize(times.size());
    double cum = 0.0;
    for (std::size_t j = 0; j < times.size(); ++j) {
        cum += logjumps[j];
        s.values_[j] = std::exp(cum);
    }
    s.times_ = std::move(times);
    return s;
}

StepSurvival StepSurvival::from_values(std::vector<double> times, std::vector<double> values) {
    if (times.size() != values.size()) throw DimensionMismatchError("times and values differ in length");
    StepSurvival s;
    s.times_ = std::move(times);
    s.values_ = std::move(values);
    return s;
}

std::vector<double> StepSurvival::logjumps() const {
    std::vector<double> u(values_.size());
    double prev = 1.0;
    for (std::size_t j = 0; j < values_.size(); ++j) {
        const double cur = values_[j];
        if (cur <= 0.0 || prev <= 0.0) {
            u[j] = prev > 0.0 ? -kZeroSurvivalCap : 0.0;
        } else {
            u[j] = std::max(std::log(cur / prev), -kZeroSurvivalCap);
        }
        prev = cur;
    }
    return u;
}

double StepSurvival::operator()(double t) const {
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return 1.0;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double StepSurvival::integral(double a, double b) const {
    if (b <= a) return 0.0;
    double total = 0.0;
    double left = a;
    double height = (*this)(a);
    auto it = std::upper_bound(times_.begin(), times_.end(), a);
    for (; it != times_.end() && *it < b; ++it) {
        total += height * (*it - left);
        left = *it;
        height = values_[static_cast<std::size_t>(it - times_.begin())];
    }
    total += height * (b - left);
    return total;
}

EventGrid build_event_grid(const Cohort& cohort) {
    if (cohort.empty()) throw EmptyArmError("cohort is empty");
    for (int arm : {0, 1}) {
        if (cohort.arm_events(arm) == 0) {
            throw EmptyArmError("arm " + std::to_string(arm) + " has no observed events");
        }
    }

    EventGrid grid;
    for (const auto& s : cohort.subjects()) {
        if (!s.event) continue;
        if (s.time <= 0.0) throw InputError("event times must be positive");
        grid.times.push_back(s.time);
    }
    std::sort(grid.times.begin(), grid.times.end());
    grid.times.erase(std::unique(grid.times.begin(), grid.times.end()), grid.times.end());

    const std::size_t m = grid.times.size();
    for (int arm : {0, 1}) {
        grid.events[arm].assign(m, 0);
        grid.at_risk[arm].assign(m, 0);
    }

    // R_ja counts Y_i >= t_j; each subject is at risk at every grid time up to its follow-up.
    for (const auto& s : cohort.subjects()) {
        const auto last = std::upper_bound(grid.times.begin(), grid.times.end(), s.time);
        const auto n_at_risk = static_cast<std::size_t>(last - grid.times.begin());
        auto& risk = grid.at_risk[s.arm];
        // Difference array: +1 at index 0, -1 after the last grid time covered.
        risk[0] += 1;
        if (n_at_risk < m) risk[n_at_risk] -= 1;
        if (s.event) grid.events[s.arm][n_at_risk - 1] += 1;
    }
    for (int arm : {0, 1}) {
        for (std::size_t j = 1; j < m; ++j) grid.at_risk[arm][j] += grid.at_risk[arm][j - 1];
    }
    return grid;
}

std::vector<double> kaplan_meier_logjumps(const EventGrid& grid, int arm) {
    const std::size_t m = grid.size();
    std::vector<double> u(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const int d = grid.d(j, arm);
        const int r = grid.r(j, arm);
        if (d == 0 || r == 0) continue;
        if (d >= r) {
            u[j] = -kZeroSurvivalCap;
        } else {
            u[j] = std::max(std::log1p(-static_cast<double>(d) / r), -kZeroSurvivalCap);
        }
    }
    return u;
}

StepSurvival kaplan_meier(const EventGrid& grid, int arm) {
    const auto u = kaplan_meier_logjumps(grid, arm);
    return StepSurvival::from_logjumps(grid.times, u);
}

Cohort bin_followup(const Cohort& cohort, double width) {
    if (!(width > 0.0) || !std::isfinite(width)) throw InvalidWidthError("bin width must be positive");
    std::vector<Subject> out = cohort.subjects();
    for (auto& s : out) {
        const double k = std::floor(s.time / width);
        s.time = (k + 0.5) * width;
    }
    return Cohort(std::move(out));
}

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& text, std::size_t line_no) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty()) {
        throw InputError("line " + std::to_string(line_no) + ": cannot parse number '" + text + "'");
    }
    return value;
}

int parse_flag(const std::string& text, std::size_t line_no, const char* what) {
    if (text == "0") return 0;
    if (text == "1") return 1;
    throw InputError("line " + std::to_string(line_no) + ": " + what + " must be 0 or 1, got '" + text + "'");
}

}  // namespace

Cohort read_cohort_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty CSV input");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_commas(line);
    if (header != std::vector<std::string>{"time", "event", "arm"}) {
        throw InputError("CSV header must be exactly 'time,event,arm'");
    }

    std::vector<Subject> subjects;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() != 3) {
            throw InputError("line " + std::to_string(line_no) + ": expected 3 fields");
        }
        Subject s;
        s.time = parse_double(fields[0], line_no);
        s.event = parse_flag(fields[1], line_no, "event") == 1;
        s.arm = parse_flag(fields[2], line_no, "arm");
        subjects.push_back(s);
    }
    return Cohort(std::move(subjects));
}

Cohort read_cohort_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return read_cohort_csv(in);
}

}  // namespace sccsurv
