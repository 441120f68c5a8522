#pragma once

// Normalised dataset directories: the model inputs (contacts, census) plus the canonical
// mobility and observation series produced by ingestion.
//
// Layout of a dataset directory:
//   manifest.json      region, dates, lockdown day, file names
//   contacts.txt       contact matrices (see data_files.hpp)
//   census.txt         population per age group
//   mobility.csv       day,m_work,m_school,m_other
//   deaths.csv         day,deaths_1,...,deaths_5
//   hospital.csv       day,hospital
//   ingest_report.json rows read / dropped / interpolated

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "epicontrol/mobility.hpp"
#include "epicontrol/observations.hpp"
#include "epicontrol/seird.hpp"

namespace epicontrol {

struct CountryPreset {
    std::string name;
    /// Region key used to select rows of the mobility report.
    std::string region;
    Date epidemic_start;
    Date lockdown_start;
    Date school_closure;
};

/// "england" and "france".
const std::vector<CountryPreset>& country_presets();
/// Case-insensitive lookup; std::nullopt when unknown.
std::optional<CountryPreset> find_preset(const std::string& name);

struct IngestReport {
    MobilityIngestReport mobility;
    HealthIngestReport health;
};

std::string ingest_report_to_json(const IngestReport& report);

struct Dataset {
    std::string region;
    Date epidemic_start = parse_date("2020-03-01");
    Date school_closure = parse_date("2020-03-23");
    int lockdown_start_day = 17;
    ContactMatrixSet contacts;
    PopulationCensus census;
    MobilitySeries mobility;
    ObservationSet observations;

    ModelSetup setup(double dt = kDefaultDt) const { return {contacts, census, mobility, lockdown_start_day, dt}; }
};

struct IngestInputs {
    std::filesystem::path mobility_csv;
    std::filesystem::path deaths_csv;
    std::filesystem::path hospital_csv;
    std::filesystem::path contacts_file;
    std::filesystem::path census_file;
    std::string region;
    Date lockdown_start = parse_date("2020-03-18");
    MobilityPipelineConfig mobility_config;
    AgeBandMapping age_bands;
};

Dataset ingest_dataset(const IngestInputs& inputs, IngestReport* report = nullptr);

/// Writes every dataset file; the report is optional.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, const IngestReport* report = nullptr);
/// Throws StructuralError naming the missing or malformed file.
Dataset load_dataset(const std::filesystem::path& dir);

/// Single-document form of a dataset directory, used as the artifact of an ingest job.
std::string dataset_to_bundle(const Dataset& dataset, const IngestReport* report = nullptr);
Dataset dataset_from_bundle(const std::string& text);

/// Observations of `dataset` restricted to days <= last_day (e.g. a calibration cut-off).
Dataset truncate_dataset(const Dataset& dataset, int last_day);

}  // namespace epicontrol
