#include "epicontrol/dataset.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

#include "epicontrol/data_files.hpp"
#include "epicontrol/error.hpp"

namespace epicontrol {

using nlohmann::json;

const std::vector<CountryPreset>& country_presets() {
    static const std::vector<CountryPreset> presets{
        {"england", "GB", parse_date("2020-03-01"), parse_date("2020-03-18"), parse_date("2020-03-23")},
        {"france", "FR", parse_date("2020-03-01"), parse_date("2020-03-17"), parse_date("2020-03-16")},
    };
    return presets;
}

std::optional<CountryPreset> find_preset(const std::string& name) {
    std::string key = name;
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& p : country_presets()) {
        if (p.name == key) return p;
    }
    return std::nullopt;
}

std::string ingest_report_to_json(const IngestReport& r) {
    json j{{"mobility",
            {{"rows_read", r.mobility.rows_read},
             {"rows_matched", r.mobility.rows_matched},
             {"rows_dropped", r.mobility.rows_dropped},
             {"days_interpolated", r.mobility.days_interpolated},
             {"interpolated_dates", r.mobility.interpolated_dates}}},
           {"health",
            {{"death_rows", r.health.death_rows},
             {"death_rows_dropped", r.health.death_rows_dropped},
             {"hospital_rows", r.health.hospital_rows},
             {"hospital_rows_dropped", r.health.hospital_rows_dropped}}}};
    return j.dump(1) + "\n";
}

Dataset ingest_dataset(const IngestInputs& in, IngestReport* report) {
    IngestReport local;
    IngestReport& rep = report ? *report : local;
    Dataset ds;
    ds.region = in.region;
    ds.epidemic_start = in.mobility_config.epidemic_start;
    ds.school_closure = in.mobility_config.school_closure;
    ds.lockdown_start_day = days_between(ds.epidemic_start, in.lockdown_start);
    if (ds.lockdown_start_day < 0) throw ValidationError("lockdown start precedes the epidemic start");
    ds.contacts = load_contact_matrices(in.contacts_file);
    ds.census = load_census(in.census_file);
    const auto raw = parse_mobility_csv(in.mobility_csv, in.region, &rep.mobility);
    ds.mobility = build_mobility_series(raw, in.mobility_config, &rep.mobility);
    ds.observations = parse_health_csv(in.deaths_csv, in.hospital_csv, ds.epidemic_start, in.age_bands, &rep.health);
    return ds;
}

namespace {

json manifest_json(const Dataset& ds) {
    return json{{"schema_version", 1},
                {"kind", "dataset"},
                {"region", ds.region},
                {"epidemic_start", format_date(ds.epidemic_start)},
                {"school_closure", format_date(ds.school_closure)},
                {"lockdown_start_day", ds.lockdown_start_day},
                {"files",
                 {{"contacts", "contacts.txt"},
                  {"census", "census.txt"},
                  {"mobility", "mobility.csv"},
                  {"deaths", "deaths.csv"},
                  {"hospital", "hospital.csv"}}}};
}

void read_manifest(const json& m, Dataset& ds) {
    ds.region = m.at("region").get<std::string>();
    ds.epidemic_start = parse_date(m.at("epidemic_start").get<std::string>());
    ds.school_closure = parse_date(m.at("school_closure").get<std::string>());
    ds.lockdown_start_day = m.at("lockdown_start_day").get<int>();
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir, const IngestReport* report) {
    std::filesystem::create_directories(dir);
    const json manifest = manifest_json(ds);
    write_text_file(dir / "manifest.json", manifest.dump(1) + "\n");
    write_text_file(dir / "contacts.txt", format_contact_matrices(ds.contacts));
    write_text_file(dir / "census.txt", format_census(ds.census));
    write_text_file(dir / "mobility.csv", format_mobility_series_csv(ds.mobility));
    write_text_file(dir / "deaths.csv", format_deaths_series_csv(ds.observations));
    write_text_file(dir / "hospital.csv", format_hospital_series_csv(ds.observations));
    if (report) write_text_file(dir / "ingest_report.json", ingest_report_to_json(*report));
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) {
        throw StructuralError("dataset directory " + dir.string() + " has no manifest.json");
    }
    Dataset ds;
    json files;
    try {
        const json m = json::parse(read_text_file(manifest_path));
        read_manifest(m, ds);
        files = m.at("files");
    } catch (const json::exception& e) {
        throw StructuralError(manifest_path.string() + ": " + e.what());
    }
    auto file = [&](const char* key) {
        const auto p = dir / files.value(key, std::string());
        if (!std::filesystem::is_regular_file(p)) throw StructuralError("dataset file missing: " + p.string());
        return p;
    };
    ds.contacts = load_contact_matrices(file("contacts"));
    ds.census = load_census(file("census"));
    ds.mobility = parse_mobility_series_csv(read_text_file(file("mobility")));
    ds.observations = parse_observation_series_csv(read_text_file(file("deaths")), read_text_file(file("hospital")));
    return ds;
}

std::string dataset_to_bundle(const Dataset& ds, const IngestReport* report) {
    json j{{"schema_version", 1},
           {"kind", "dataset-bundle"},
           {"manifest", manifest_json(ds)},
           {"files",
            {{"contacts.txt", format_contact_matrices(ds.contacts)},
             {"census.txt", format_census(ds.census)},
             {"mobility.csv", format_mobility_series_csv(ds.mobility)},
             {"deaths.csv", format_deaths_series_csv(ds.observations)},
             {"hospital.csv", format_hospital_series_csv(ds.observations)}}}};
    if (report) j["report"] = json::parse(ingest_report_to_json(*report));
    return j.dump(1) + "\n";
}

Dataset dataset_from_bundle(const std::string& text) {
    Dataset ds;
    try {
        const json j = json::parse(text);
        if (j.at("kind").get<std::string>() != "dataset-bundle") throw StructuralError("not a dataset bundle");
        read_manifest(j.at("manifest"), ds);
        const json& f = j.at("files");
        ds.contacts = parse_contact_matrices(f.at("contacts.txt").get<std::string>());
        ds.census = parse_census(f.at("census.txt").get<std::string>());
        ds.mobility = parse_mobility_series_csv(f.at("mobility.csv").get<std::string>());
        ds.observations =
            parse_observation_series_csv(f.at("deaths.csv").get<std::string>(), f.at("hospital.csv").get<std::string>());
    } catch (const json::exception& e) {
        throw StructuralError(std::string("malformed dataset bundle: ") + e.what());
    }
    return ds;
}

Dataset truncate_dataset(const Dataset& dataset, int last_day) {
    Dataset out = dataset;
    out.observations = dataset.observations.truncated(last_day);
    return out;
}

}  // namespace epicontrol
