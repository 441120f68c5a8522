#pragma once

#include <string>
#include <vector>

namespace epicontrol {

/// Mobility multipliers for the three controllable location categories (1.0 = pre-pandemic baseline).
struct MobilityPoint {
    double school = 1.0;
    double work = 1.0;
    double other = 1.0;

    bool operator==(const MobilityPoint&) const = default;
};

/// Daily mobility multipliers indexed by day offset from the epidemic start.
class MobilitySeries {
public:
    MobilitySeries() = default;
    MobilitySeries(int first_day, std::vector<MobilityPoint> values);

    int first_day() const { return first_day_; }
    int last_day() const { return first_day_ + static_cast<int>(values_.size()) - 1; }
    bool empty() const { return values_.empty(); }
    std::size_t size() const { return values_.size(); }
    const std::vector<MobilityPoint>& values() const { return values_; }

    bool covers(int day) const { return day >= first_day_ && day <= last_day(); }
    /// Throws ValidationError when the day is outside the series.
    const MobilityPoint& at(int day) const;

    /// Throws ValidationError listing every day of [from, to] the series does not cover.
    void require_coverage(int from, int to) const;

    /// Series restricted to [from, to] (intersection with the covered range).
    MobilitySeries slice(int from, int to) const;

private:
    int first_day_ = 0;
    std::vector<MobilityPoint> values_;
};

}  // namespace epicontrol
