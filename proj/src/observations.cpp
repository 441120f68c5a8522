#include "epicontrol/observations.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include "epicontrol/csv_format.hpp"
#include "epicontrol/data_files.hpp"
#include "epicontrol/error.hpp"

namespace epicontrol {

ObservationSet ObservationSet::truncated(int last) const {
    ObservationSet out = *this;
    const int keep_deaths = std::clamp(last - first_death_day + 1, 0, static_cast<int>(daily_deaths.size()));
    out.daily_deaths.resize(static_cast<std::size_t>(keep_deaths));
    const int keep_hosp = std::clamp(last - hospital_first_day + 1, 0, static_cast<int>(hospital.size()));
    out.hospital.resize(static_cast<std::size_t>(keep_hosp));
    return out;
}

void ObservationSet::validate() const {
    if (first_death_day < 1) throw ValidationError("death series must start at day >= 1");
    if (hospital_first_day < 0) throw ValidationError("hospital series cannot start before the epidemic start");
    for (const auto& day : daily_deaths) {
        for (double v : day) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("death counts must be finite and >= 0");
        }
    }
    for (double v : hospital) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("hospital occupancy must be finite and >= 0");
    }
}

ObservationSet observe(const Trajectory& trajectory, int last_day, int hospital_first_day, int first_death_day) {
    if (last_day > trajectory.end_day() || first_death_day <= trajectory.start_day) {
        throw ValidationError("trajectory does not cover the observation window");
    }
    ObservationSet obs;
    obs.first_death_day = first_death_day;
    obs.hospital_first_day = hospital_first_day;
    for (int d = first_death_day; d <= last_day; ++d) obs.daily_deaths.push_back(trajectory.deaths_on(d));
    for (int d = std::max(hospital_first_day, trajectory.start_day); d <= last_day; ++d) {
        obs.hospital.push_back(trajectory.hospital_on(d));
    }
    return obs;
}

std::optional<int> AgeBandMapping::group_for(const std::string& label) const {
    if (const auto it = overrides.find(label); it != overrides.end()) return it->second;
    static const std::regex range(R"(^\s*(\d+)\s*[-_]\s*(\d+)\s*$)");
    static const std::regex open(R"(^\s*(\d+)\s*\+\s*$)");
    std::smatch m;
    int lo = 0;
    int hi = 0;
    if (std::regex_match(label, m, range)) {
        lo = std::stoi(m[1]);
        hi = std::stoi(m[2]);
        if (hi < lo) throw ValidationError("unmappable age band '" + label + "'");
    } else if (std::regex_match(label, m, open)) {
        lo = std::stoi(m[1]);
        hi = 1000;
    } else {
        throw ValidationError("unmappable age band '" + label + "'");
    }
    for (int g = static_cast<int>(kAgeGroups) - 1; g >= 0; --g) {
        if (lo >= kAgeBandLower[static_cast<std::size_t>(g)]) {
            const int upper = g + 1 < static_cast<int>(kAgeGroups) ? kAgeBandLower[static_cast<std::size_t>(g + 1)] - 1 : 1000;
            if (hi > upper) throw ValidationError("unmappable age band '" + label + "' straddles model bands");
            return g;
        }
    }
    throw ValidationError("unmappable age band '" + label + "'");
}

namespace {

std::vector<std::vector<std::string>> read_rows(const std::string& text, const std::vector<std::string>& header,
                                                const char* what) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != header) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        throw ValidationError(std::string(what) + " CSV must start with header " + expected);
    }
    std::vector<std::vector<std::string>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw ValidationError(std::string(what) + " CSV line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields");
        }
        rows.push_back(std::move(f));
    }
    return rows;
}

double parse_count(const std::string& text, const char* what, std::size_t row) {
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw ValidationError(std::string(what) + " row " + std::to_string(row + 1) + ": malformed count '" + text + "'");
    }
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ValidationError(std::string(what) + " row " + std::to_string(row + 1) + ": negative count " + text);
    }
    return v;
}

}  // namespace

ObservationSet parse_health_csv_text(const std::string& deaths_csv, const std::string& hospital_csv, Date epidemic_start,
                                     const AgeBandMapping& mapping, HealthIngestReport* report) {
    HealthIngestReport local;
    HealthIngestReport& rep = report ? *report : local;

    const auto death_rows = read_rows(deaths_csv, {"date", "age_band", "count"}, "deaths");
    ObservationSet obs;
    int last = 0;
    std::vector<std::pair<int, std::pair<int, double>>> entries;
    for (std::size_t r = 0; r < death_rows.size(); ++r) {
        ++rep.death_rows;
        const int day = days_between(epidemic_start, parse_date(death_rows[r][0]));
        const auto group = mapping.group_for(death_rows[r][1]);
        const double count = parse_count(death_rows[r][2], "deaths", r);
        if (day < 1 || !group) {
            ++rep.death_rows_dropped;
            continue;
        }
        entries.push_back({day, {*group, count}});
        last = std::max(last, day);
    }
    if (entries.empty()) throw ValidationError("deaths CSV has no rows after the epidemic start");
    obs.first_death_day = 1;
    obs.daily_deaths.assign(static_cast<std::size_t>(last), AgeVector{});
    for (const auto& [day, gc] : entries) obs.daily_deaths[static_cast<std::size_t>(day - 1)][static_cast<std::size_t>(gc.first)] += gc.second;

    const auto hosp_rows = read_rows(hospital_csv, {"date", "occupancy"}, "hospital");
    std::vector<std::pair<int, double>> hosp;
    for (std::size_t r = 0; r < hosp_rows.size(); ++r) {
        ++rep.hospital_rows;
        const int day = days_between(epidemic_start, parse_date(hosp_rows[r][0]));
        const double v = parse_count(hosp_rows[r][1], "hospital", r);
        if (day < 0) {
            ++rep.hospital_rows_dropped;
            continue;
        }
        hosp.emplace_back(day, v);
    }
    if (hosp.empty()) throw ValidationError("hospital CSV has no rows on or after the epidemic start");
    std::sort(hosp.begin(), hosp.end());
    obs.hospital_first_day = hosp.front().first;
    for (std::size_t i = 0; i < hosp.size(); ++i) {
        const int expected = obs.hospital_first_day + static_cast<int>(i);
        if (hosp[i].first != expected) {
            const Date at = add_days(epidemic_start, expected);
            throw ValidationError(hosp[i].first < expected ? "duplicate hospital date " + format_date(at)
                                                           : "hospital series has a gap at " + format_date(at));
        }
        obs.hospital.push_back(hosp[i].second);
    }
    obs.validate();
    return obs;
}

ObservationSet parse_health_csv(const std::filesystem::path& deaths_path, const std::filesystem::path& hospital_path,
                                Date epidemic_start, const AgeBandMapping& mapping, HealthIngestReport* report) {
    return parse_health_csv_text(read_text_file(deaths_path), read_text_file(hospital_path), epidemic_start, mapping,
                                 report);
}

std::string format_deaths_series_csv(const ObservationSet& obs) {
    CsvWriter csv({"day", "deaths_1", "deaths_2", "deaths_3", "deaths_4", "deaths_5"});
    int day = obs.first_death_day;
    for (const auto& d : obs.daily_deaths) {
        std::vector<std::string> row{std::to_string(day++)};
        for (double v : d) row.push_back(format_number(v));
        csv.add_row(row);
    }
    return csv.str();
}

std::string format_hospital_series_csv(const ObservationSet& obs) {
    CsvWriter csv({"day", "hospital"});
    int day = obs.hospital_first_day;
    for (double v : obs.hospital) csv.add_row({std::to_string(day++), format_number(v)});
    return csv.str();
}

ObservationSet parse_observation_series_csv(const std::string& deaths_csv, const std::string& hospital_csv) {
    ObservationSet obs;
    const auto deaths = read_rows(deaths_csv, {"day", "deaths_1", "deaths_2", "deaths_3", "deaths_4", "deaths_5"}, "deaths series");
    for (std::size_t r = 0; r < deaths.size(); ++r) {
        const int day = std::stoi(deaths[r][0]);
        if (r == 0) obs.first_death_day = day;
        if (day != obs.first_death_day + static_cast<int>(r)) throw ValidationError("deaths series days must be consecutive");
        AgeVector v;
        for (std::size_t g = 0; g < kAgeGroups; ++g) v[g] = parse_count(deaths[r][g + 1], "deaths series", r);
        obs.daily_deaths.push_back(v);
    }
    const auto hosp = read_rows(hospital_csv, {"day", "hospital"}, "hospital series");
    for (std::size_t r = 0; r < hosp.size(); ++r) {
        const int day = std::stoi(hosp[r][0]);
        if (r == 0) obs.hospital_first_day = day;
        if (day != obs.hospital_first_day + static_cast<int>(r)) throw ValidationError("hospital series days must be consecutive");
        obs.hospital.push_back(parse_count(hosp[r][1], "hospital series", r));
    }
    obs.validate();
    return obs;
}

}  // namespace epicontrol
