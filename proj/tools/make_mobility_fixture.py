#!/usr/bin/env python3
"""Writes a synthetic Google community-mobility report for GB and FR.

The shape (flat baseline, steep fall in mid-March, slow recovery) follows the
published national reports; the values themselves are synthetic. Output is
deterministic for a given seed.

    python3 tools/make_mobility_fixture.py data/raw/mobility_report.csv
"""

import csv
import datetime as dt
import sys

import numpy as np

COLUMNS = [
    "country_region_code", "country_region", "sub_region_1", "sub_region_2", "metro_area",
    "iso_3166_2_code", "census_fips_code", "place_id", "date",
    "retail_and_recreation_percent_change_from_baseline",
    "grocery_and_pharmacy_percent_change_from_baseline",
    "parks_percent_change_from_baseline",
    "transit_stations_percent_change_from_baseline",
    "workplaces_percent_change_from_baseline",
    "residential_percent_change_from_baseline",
]

START = dt.date(2020, 2, 15)
END = dt.date(2020, 7, 31)

# (plateau level, recovery per 30 days) per category, in percent change from baseline.
PROFILES = {
    "GB": {"retail": (-82, 9), "grocery": (-28, 6), "parks": (-30, 25), "transit": (-72, 7), "work": (-69, 5),
           "residential": (25, -3), "drop": dt.date(2020, 3, 16), "floor": dt.date(2020, 3, 25)},
    "FR": {"retail": (-86, 14), "grocery": (-40, 10), "parks": (-72, 22), "transit": (-84, 12), "work": (-66, 8),
           "residential": (28, -5), "drop": dt.date(2020, 3, 13), "floor": dt.date(2020, 3, 19)},
}
ORDER = ["retail", "grocery", "parks", "transit", "work", "residential"]


def level(profile, key, day):
    plateau, recovery = profile[key]
    drop, floor = profile["drop"], profile["floor"]
    if day < drop:
        return 0.0
    if day < floor:
        return plateau * (day - drop).days / (floor - drop).days
    return plateau + recovery * (day - floor).days / 30.0


def rows(code, name, sub_region, rng, scale=1.0):
    profile = PROFILES[code]
    day = START
    while day <= END:
        weekend = day.weekday() >= 5
        values = []
        for key in ORDER:
            v = level(profile, key, day) * scale
            if weekend and key == "work":
                v *= 0.8
            if weekend and key == "parks":
                v += 8.0
            v += rng.normal(0.0, 1.5)
            values.append(str(int(round(v))))
        yield [code, name, sub_region, "", "", "", "", "", day.isoformat()] + values
        day += dt.timedelta(days=1)


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "data/raw/mobility_report.csv"
    rng = np.random.default_rng(20200301)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows("GB", "United Kingdom", "", rng):
            if row[8] == "2020-04-12":
                row[11] = ""  # blank parks cell, repaired by interpolation
            w.writerow(row)
        for row in rows("GB", "United Kingdom", "Greater London", rng, scale=1.1):
            w.writerow(row)
        for row in rows("FR", "France", "", rng):
            w.writerow(row)


if __name__ == "__main__":
    main()
