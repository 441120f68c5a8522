#pragma once

// JSON persistence of calibration artifacts (posterior ensembles) and prior specifications.

#include <cstdint>
#include <filesystem>
#include <string>

#include "epicontrol/abc.hpp"

namespace epicontrol {

inline constexpr int kEnsembleSchemaVersion = 1;

struct CalibrationArtifact {
    PosteriorEnsemble ensemble;
    PriorSpecification prior = PriorSpecification::defaults();
    PmcConfig config;
    /// Reference of the dataset the run was calibrated on (artifact ref or path); may be empty.
    std::string dataset_ref;
    std::string region;
    /// Observation horizon (day offsets) the ensemble was calibrated against.
    int first_death_day = 1;
    int last_death_day = 0;
    int hospital_first_day = 17;
    int hospital_last_day = 0;
    /// Artifact ref of the calibration this one replaces (dynamic update chain); may be empty.
    std::string previous_ref;
};

std::string ensemble_to_json(const CalibrationArtifact& artifact);
/// Throws ValidationError with the offending field path on schema violations.
CalibrationArtifact ensemble_from_json(const std::string& text);

void save_ensemble(const CalibrationArtifact& artifact, const std::filesystem::path& path);
CalibrationArtifact load_ensemble(const std::filesystem::path& path);

std::string prior_to_json(const PriorSpecification& prior);
/// Accepts either a full list of marginals or an object keyed by parameter name that
/// overrides entries of the default prior.
PriorSpecification prior_from_json(const std::string& text);

}  // namespace epicontrol
