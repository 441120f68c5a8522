#pragma once

// Google community-mobility ingestion and conversion into the daily
// (m_school, m_work, m_other) series the model consumes.

#include <filesystem>
#include <string>
#include <vector>

#include "epicontrol/dates.hpp"
#include "epicontrol/mobility_series.hpp"

namespace epicontrol {

/// One day of raw mobility, already converted to multipliers (1.0 = baseline).
/// A blank cell in the source file is stored as NaN and repaired by fill_mobility_gaps.
struct RawMobilityRecord {
    Date date;
    double retail = 1.0;
    double grocery = 1.0;
    double parks = 1.0;
    double transit = 1.0;
    double workplaces = 1.0;
    double residential = 1.0;
};

struct MobilityIngestReport {
    int rows_read = 0;
    int rows_matched = 0;
    int rows_dropped = 0;
    int days_interpolated = 0;
    std::vector<std::string> interpolated_dates;
};

double percent_to_multiplier(double percent_change);
double multiplier_to_percent(double multiplier);

/// Parses a Google community mobility report CSV. Columns are located by header name; the six
/// "*_percent_change_from_baseline" columns and "date" are required. `region` matches either
/// the national rows (country_region_code or country_region, with empty sub-regions) or a
/// sub_region_1 name. Rows are returned sorted by date; duplicate dates are rejected.
std::vector<RawMobilityRecord> parse_mobility_csv(const std::filesystem::path& path, const std::string& region,
                                                  MobilityIngestReport* report = nullptr);
std::vector<RawMobilityRecord> parse_mobility_csv_text(const std::string& text, const std::string& region,
                                                       MobilityIngestReport* report = nullptr);

/// m_other = 0.1 parks + 0.3 retail + 0.3 transit + 0.3 grocery.
double aggregate_other(double parks, double retail, double transit, double grocery);

enum class SchoolPolicy { Historical, Control };

/// Historical mode: 1.0 before the closure date, 0.1 from it onward. Control mode returns
/// `control_value` (the optimizer owns the channel).
inline constexpr double kClosedSchoolMobility = 0.1;
double school_mobility(Date date, Date closure_date, SchoolPolicy policy = SchoolPolicy::Historical,
                       double control_value = 1.0);

/// Returns one record per calendar day between the first and last input dates. Runs of up to
/// `max_gap_days` missing days (absent rows or blank cells) are linearly interpolated; longer
/// runs, or gaps at either end, raise ValidationError naming the dates.
std::vector<RawMobilityRecord> fill_mobility_gaps(const std::vector<RawMobilityRecord>& records, int max_gap_days = 3,
                                                  MobilityIngestReport* report = nullptr);

struct MobilityPipelineConfig {
    Date epidemic_start = parse_date("2020-03-01");
    Date school_closure = parse_date("2020-03-23");
    int savgol_window = 15;
    int savgol_order = 2;
    int max_gap_days = 3;
};

/// Gap-fill, smooth every category, aggregate "other", apply the school rule and clamp to
/// [0, 1.5]. Days are offsets from config.epidemic_start.
MobilitySeries build_mobility_series(const std::vector<RawMobilityRecord>& records, const MobilityPipelineConfig& config,
                                     MobilityIngestReport* report = nullptr);

/// Canonical series file: header "day,m_work,m_school,m_other", ascending days.
std::string format_mobility_series_csv(const MobilitySeries& series);
MobilitySeries parse_mobility_series_csv(const std::string& text);

}  // namespace epicontrol
