#include "epicontrol/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "epicontrol/csv_format.hpp"
#include "epicontrol/data_files.hpp"
#include "epicontrol/error.hpp"
#include "epicontrol/savgol.hpp"
#include "epicontrol/seird.hpp"

namespace epicontrol {

double percent_to_multiplier(double percent_change) { return 1.0 + percent_change / 100.0; }
double multiplier_to_percent(double multiplier) { return (multiplier - 1.0) * 100.0; }

double aggregate_other(double parks, double retail, double transit, double grocery) {
    return 0.1 * parks + 0.3 * retail + 0.3 * transit + 0.3 * grocery;
}

double school_mobility(Date date, Date closure_date, SchoolPolicy policy, double control_value) {
    if (policy == SchoolPolicy::Control) return control_value;
    return date < closure_date ? 1.0 : kClosedSchoolMobility;
}

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

constexpr const char* kCategoryColumns[6] = {
    "retail_and_recreation_percent_change_from_baseline", "grocery_and_pharmacy_percent_change_from_baseline",
    "parks_percent_change_from_baseline",                 "transit_stations_percent_change_from_baseline",
    "workplaces_percent_change_from_baseline",            "residential_percent_change_from_baseline"};

double* category(RawMobilityRecord& r, int k) {
    switch (k) {
        case 0: return &r.retail;
        case 1: return &r.grocery;
        case 2: return &r.parks;
        case 3: return &r.transit;
        case 4: return &r.workplaces;
        default: return &r.residential;
    }
}

double category_value(const RawMobilityRecord& r, int k) { return *category(const_cast<RawMobilityRecord&>(r), k); }

std::optional<std::size_t> find_column(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
}

std::string field_or_empty(const std::vector<std::string>& row, std::optional<std::size_t> col) {
    if (!col || *col >= row.size()) return {};
    return row[*col];
}

}  // namespace

std::vector<RawMobilityRecord> parse_mobility_csv_text(const std::string& text, const std::string& region,
                                                       MobilityIngestReport* report) {
    MobilityIngestReport local;
    MobilityIngestReport& rep = report ? *report : local;

    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("mobility CSV is empty (header required)");
    const auto header = split_csv_line(line);

    const auto date_col = find_column(header, "date");
    if (!date_col) throw ValidationError("mobility CSV header lacks a 'date' column");
    std::size_t cat_cols[6];
    for (int k = 0; k < 6; ++k) {
        const auto col = find_column(header, kCategoryColumns[k]);
        if (!col) throw ValidationError(std::string("mobility CSV header lacks column '") + kCategoryColumns[k] + "'");
        cat_cols[k] = *col;
    }
    const auto code_col = find_column(header, "country_region_code");
    const auto country_col = find_column(header, "country_region");
    const auto sub1_col = find_column(header, "sub_region_1");
    const auto sub2_col = find_column(header, "sub_region_2");
    const auto metro_col = find_column(header, "metro_area");
    if (!code_col && !country_col && !sub1_col && region != "*") {
        throw ValidationError("mobility CSV has no region columns; use region '*'");
    }

    std::vector<RawMobilityRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        ++rep.rows_read;
        std::vector<std::string> row;
        try {
            row = split_csv_line(line);
        } catch (const ValidationError& e) {
            throw ValidationError("mobility CSV line " + std::to_string(line_no) + ": " + e.what());
        }
        if (row.size() != header.size()) {
            throw ValidationError("mobility CSV line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " + std::to_string(row.size()));
        }
        bool match = region == "*";
        if (!match) {
            const auto sub1 = field_or_empty(row, sub1_col);
            const auto sub2 = field_or_empty(row, sub2_col);
            const auto metro = field_or_empty(row, metro_col);
            const bool national = sub1.empty() && sub2.empty() && metro.empty();
            match = (national && (field_or_empty(row, code_col) == region || field_or_empty(row, country_col) == region)) ||
                    (!sub1.empty() && sub2.empty() && metro.empty() && sub1 == region);
        }
        if (!match) {
            ++rep.rows_dropped;
            continue;
        }
        RawMobilityRecord rec;
        try {
            rec.date = parse_date(row[*date_col]);
        } catch (const ValidationError& e) {
            throw ValidationError("mobility CSV line " + std::to_string(line_no) + ": " + e.what());
        }
        for (int k = 0; k < 6; ++k) {
            const std::string& cell = row[cat_cols[k]];
            if (cell.empty()) {
                *category(rec, k) = kMissing;
                continue;
            }
            try {
                std::size_t used = 0;
                const double pct = std::stod(cell, &used);
                if (used != cell.size() || !std::isfinite(pct)) throw std::invalid_argument(cell);
                *category(rec, k) = percent_to_multiplier(pct);
            } catch (const std::exception&) {
                throw ValidationError("mobility CSV line " + std::to_string(line_no) + ": malformed value '" + cell +
                                      "' in column " + kCategoryColumns[k]);
            }
        }
        records.push_back(rec);
        ++rep.rows_matched;
    }
    if (records.empty()) throw ValidationError("no mobility rows match region '" + region + "'");

    std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].date == records[i - 1].date) {
            throw ValidationError("duplicate mobility date " + format_date(records[i].date) + " for region '" + region +
                                  "'");
        }
    }
    return records;
}

std::vector<RawMobilityRecord> parse_mobility_csv(const std::filesystem::path& path, const std::string& region,
                                                  MobilityIngestReport* report) {
    return parse_mobility_csv_text(read_text_file(path), region, report);
}

std::vector<RawMobilityRecord> fill_mobility_gaps(const std::vector<RawMobilityRecord>& records, int max_gap_days,
                                                  MobilityIngestReport* report) {
    if (records.empty()) throw ValidationError("no mobility records to process");
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (!(records[i - 1].date < records[i].date)) {
            throw ValidationError("mobility dates must be strictly increasing (at " + format_date(records[i].date) + ")");
        }
    }
    const Date first = records.front().date;
    const int n = days_between(first, records.back().date) + 1;

    std::vector<RawMobilityRecord> grid(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) {
        auto& r = grid[static_cast<std::size_t>(d)];
        r.date = add_days(first, d);
        for (int k = 0; k < 6; ++k) *category(r, k) = kMissing;
    }
    for (const auto& r : records) grid[static_cast<std::size_t>(days_between(first, r.date))] = r;

    std::vector<bool> touched(static_cast<std::size_t>(n), false);
    for (int k = 0; k < 6; ++k) {
        int d = 0;
        while (d < n) {
            if (!std::isnan(*category(grid[static_cast<std::size_t>(d)], k))) {
                ++d;
                continue;
            }
            int end = d;
            while (end < n && std::isnan(*category(grid[static_cast<std::size_t>(end)], k))) ++end;
            const int run = end - d;
            if (d == 0 || end == n || run > max_gap_days) {
                std::ostringstream msg;
                msg << "mobility gap of " << run << " day(s) in " << kCategoryColumns[k] << " cannot be interpolated:";
                for (int g = d; g < end && g < d + 10; ++g) msg << ' ' << format_date(add_days(first, g));
                if (run > 10) msg << " ...";
                throw ValidationError(msg.str());
            }
            const double lo = *category(grid[static_cast<std::size_t>(d - 1)], k);
            const double hi = *category(grid[static_cast<std::size_t>(end)], k);
            for (int g = d; g < end; ++g) {
                const double frac = static_cast<double>(g - d + 1) / (run + 1);
                *category(grid[static_cast<std::size_t>(g)], k) = lo + frac * (hi - lo);
                touched[static_cast<std::size_t>(g)] = true;
            }
            d = end;
        }
    }
    if (report) {
        for (int d = 0; d < n; ++d) {
            if (touched[static_cast<std::size_t>(d)]) {
                ++report->days_interpolated;
                report->interpolated_dates.push_back(format_date(add_days(first, d)));
            }
        }
    }
    return grid;
}

MobilitySeries build_mobility_series(const std::vector<RawMobilityRecord>& records, const MobilityPipelineConfig& config,
                                     MobilityIngestReport* report) {
    const auto grid = fill_mobility_gaps(records, config.max_gap_days, report);
    const std::size_t n = grid.size();

    std::vector<double> series[6];
    for (int k = 0; k < 6; ++k) {
        series[k].resize(n);
        for (std::size_t d = 0; d < n; ++d) series[k][d] = category_value(grid[d], k);
        series[k] = savgol_smooth(series[k], config.savgol_window, config.savgol_order);
    }

    std::vector<MobilityPoint> values(n);
    for (std::size_t d = 0; d < n; ++d) {
        const Date date = grid[d].date;
        values[d].work = clamp_mobility(series[4][d]);
        values[d].other = clamp_mobility(aggregate_other(series[2][d], series[0][d], series[3][d], series[1][d]));
        values[d].school = school_mobility(date, config.school_closure);
    }
    return MobilitySeries(days_between(config.epidemic_start, grid.front().date), std::move(values));
}

std::string format_mobility_series_csv(const MobilitySeries& series) {
    CsvWriter csv({"day", "m_work", "m_school", "m_other"});
    int day = series.first_day();
    for (const auto& m : series.values()) {
        csv.add_row({std::to_string(day++), format_number(m.work), format_number(m.school), format_number(m.other)});
    }
    return csv.str();
}

MobilitySeries parse_mobility_series_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"day", "m_work", "m_school", "m_other"}) {
        throw ValidationError("mobility series CSV must start with header day,m_work,m_school,m_other");
    }
    std::vector<MobilityPoint> values;
    int first = 0;
    int expected = 0;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 4) throw ValidationError("mobility series line " + std::to_string(line_no) + ": expected 4 fields");
        try {
            const int day = std::stoi(f[0]);
            if (values.empty()) {
                first = day;
            } else if (day != expected) {
                throw ValidationError("mobility series line " + std::to_string(line_no) + ": day " + std::to_string(day) +
                                      " breaks the daily sequence");
            }
            expected = day + 1;
            MobilityPoint p;
            p.work = std::stod(f[1]);
            p.school = std::stod(f[2]);
            p.other = std::stod(f[3]);
            values.push_back(p);
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception&) {
            throw ValidationError("mobility series line " + std::to_string(line_no) + ": malformed number");
        }
    }
    return MobilitySeries(first, std::move(values));
}

}  // namespace epicontrol
