#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace sccsurv {

// log-jump used to represent a survival curve that has dropped to zero;
// exp(-kZeroSurvivalCap) is about 1e-12.
inline constexpr double kZeroSurvivalCap = 27.63;

struct Subject {
    double time = 0.0;
    bool event = false;
    int arm = 0;  // 0 = control, 1 = active treatment
};

// Immutable right-censored two-arm sample.
class Cohort {
public:
    Cohort() = default;
    // Throws NegativeTimeError for time < 0 and InputError for arm outside {0, 1}
    // or non-finite times.
    explicit Cohort(std::vector<Subject> subjects);

    const std::vector<Subject>& subjects() const { return subjects_; }
    std::size_t size() const { return subjects_.size(); }
    bool empty() const { return subjects_.empty(); }
    std::size_t arm_size(int arm) const;
    std::size_t arm_events(int arm) const;

private:
    std::vector<Subject> subjects_;
};

// Unique event times of the pooled sample with per-arm event and risk counts.
struct EventGrid {
    std::vector<double> times;
    std::array<std::vector<int>, 2> events;   // d_ja
    std::array<std::vector<int>, 2> at_risk;  // R_ja

    std::size_t size() const { return times.size(); }
    int d(std::size_t j, int arm) const { return events[arm][j]; }
    int r(std::size_t j, int arm) const { return at_risk[arm][j]; }
};

// Right-continuous step survival function with jumps at grid times.
//
// The survival values are stored directly so that curves written to disk with
// 17 significant digits and read back evaluate identically.
class StepSurvival {
public:
    StepSurvival() = default;

    static StepSurvival from_logjumps(std::vector<double> times, std::span<const double> logjumps);
    static StepSurvival from_values(std::vector<double> times, std::vector<double> values);

    const std::vector<double>& times() const { return times_; }
    // S(t_j) for each grid time.
    const std::vector<double>& values() const { return values_; }
    std::vector<double> logjumps() const;
    std::size_t size() const { return times_.size(); }

    double operator()(double t) const;

    // Exact integral of S over [a, b] (0 <= a <= b).
    double integral(double a, double b) const;

private:
    std::vector<double> times_;
    std::vector<double> values_;
};

EventGrid build_event_grid(const Cohort& cohort);

StepSurvival kaplan_meier(const EventGrid& grid, int arm);

// Kaplan-Meier log-jumps, capped at -kZeroSurvivalCap.
std::vector<double> kaplan_meier_logjumps(const EventGrid& grid, int arm);

// Replaces every follow-up time by the midpoint of its bin [k w, (k + 1) w).
Cohort bin_followup(const Cohort& cohort, double width);

// CSV with header `time,event,arm`. Throws InputError on malformed content.
Cohort read_cohort_csv(std::istream& in);
Cohort read_cohort_csv_file(const std::string& path);

}  // namespace sccsurv
