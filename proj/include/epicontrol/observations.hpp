#pragma once

// Public-health observations (daily deaths per age group, hospital occupancy)
// and the simulated series with the same shape.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epicontrol/dates.hpp"
#include "epicontrol/seird.hpp"

namespace epicontrol {

/// Day indices are offsets from the epidemic start (day 0). Deaths on day t are
/// D(t) - D(t-1), so the death series starts at day 1. Hospital occupancy I^C_tot is only
/// available from `hospital_first_day` on; earlier days are excluded from comparisons.
struct ObservationSet {
    int first_death_day = 1;
    std::vector<AgeVector> daily_deaths;
    int hospital_first_day = 17;
    std::vector<double> hospital;

    int last_day() const { return first_death_day + static_cast<int>(daily_deaths.size()) - 1; }
    int hospital_last_day() const { return hospital_first_day + static_cast<int>(hospital.size()) - 1; }

    /// Observations restricted to days <= last_day.
    ObservationSet truncated(int last_day) const;
    void validate() const;
};

/// Re-shapes a trajectory into the observed series over [first_death_day, last_day].
ObservationSet observe(const Trajectory& trajectory, int last_day, int hospital_first_day, int first_death_day = 1);

/// Maps source age-band labels onto model groups (0-based). Labels of the form "a-b", "a_b"
/// or "a+" are mapped automatically when they fall inside one model band; `overrides` take
/// precedence and may map a label to std::nullopt to drop it.
struct AgeBandMapping {
    std::map<std::string, std::optional<int>> overrides;

    /// Throws ValidationError naming the band when it cannot be mapped.
    std::optional<int> group_for(const std::string& label) const;
};

struct HealthIngestReport {
    int death_rows = 0;
    int death_rows_dropped = 0;
    int hospital_rows = 0;
    int hospital_rows_dropped = 0;
};

/// deaths CSV: header "date,age_band,count"; hospital CSV: header "date,occupancy".
/// Days with no death rows count as zero deaths. The hospital series must be contiguous.
ObservationSet parse_health_csv(const std::filesystem::path& deaths_path, const std::filesystem::path& hospital_path,
                                Date epidemic_start, const AgeBandMapping& mapping = {},
                                HealthIngestReport* report = nullptr);
ObservationSet parse_health_csv_text(const std::string& deaths_csv, const std::string& hospital_csv,
                                     Date epidemic_start, const AgeBandMapping& mapping = {},
                                     HealthIngestReport* report = nullptr);

/// Canonical files: "day,deaths_1,...,deaths_5" and "day,hospital".
std::string format_deaths_series_csv(const ObservationSet& obs);
std::string format_hospital_series_csv(const ObservationSet& obs);
ObservationSet parse_observation_series_csv(const std::string& deaths_csv, const std::string& hospital_csv);

}  // namespace epicontrol
