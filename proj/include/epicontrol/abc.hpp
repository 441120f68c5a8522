#pragma once

// Likelihood-free calibration: weighted trajectory distance, ABC rejection,
// PMC-ABC with importance weights, bootstrap resampling and weighted summaries.

#include <atomic>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epicontrol/observations.hpp"
#include "epicontrol/prior.hpp"
#include "epicontrol/seird.hpp"

namespace epicontrol {

struct DistanceWeights {
    AgeVector w_D{1, 1, 1, 2, 2};
    double w_I = 0.1;

    void validate() const;
};

/// sum_i w_D[i] * sum_t (dD_i - dD_i_obs)^2 + w_I * sum_t (I^C - I^C_obs)^2.
/// Both sets must cover exactly the same death and hospital day ranges.
double distance(const ObservationSet& sim, const ObservationSet& obs, const DistanceWeights& w = {});

/// Pure and reentrant: maps parameters to the simulated series aligned with the observations.
using ModelRunner = std::function<ObservationSet(const EpidemicParameters&)>;

/// Runner that simulates from day 0 with historical mobility and observes on obs's day ranges.
ModelRunner make_model_runner(const ModelSetup& setup, const ObservationSet& obs);

struct Particle {
    EpidemicParameters::Vector theta{};
    double weight = 0.0;
    double distance = 0.0;

    EpidemicParameters params() const { return EpidemicParameters::from_vector(theta); }
};

enum class EnsembleStatus { Ok, AcceptanceFloor, Cancelled };
std::string to_string(EnsembleStatus status);
EnsembleStatus ensemble_status_from_string(const std::string& name);

struct GenerationRecord {
    int generation = 0;
    double tolerance = 0.0;
    std::uint64_t simulations = 0;
    std::size_t accepted = 0;
    double beta_mean = 0.0;
    double beta_std = 0.0;
};

struct PosteriorEnsemble {
    std::vector<Particle> particles;
    int generation = 0;
    double tolerance = std::numeric_limits<double>::infinity();
    EnsembleStatus status = EnsembleStatus::Ok;
    double acceptance_rate = 0.0;
    std::vector<GenerationRecord> history;

    bool empty() const { return particles.empty(); }
    /// Weights non-negative and summing to 1 (within 1e-9), particles inside the prior support.
    void validate(const PriorSpecification& prior) const;
};

struct RejectionConfig {
    double tolerance = std::numeric_limits<double>::infinity();
    std::size_t n_target = 100;
    std::uint64_t seed = 0;
    double acceptance_floor = 1e-5;
    /// The floor is only checked once max(min_draws, 1 / acceptance_floor) draws have been made.
    std::uint64_t min_draws = 1000;
    std::uint64_t max_draws = 0;  ///< 0 = derived from the floor: n_target / floor.
    int workers = 0;
    DistanceWeights weights;
};

PosteriorEnsemble abc_rejection(const ModelRunner& runner, const ObservationSet& obs, const PriorSpecification& prior,
                                const RejectionConfig& config);

struct PmcProgress {
    int generation = 0;
    int generations = 0;
    std::size_t accepted = 0;
    std::size_t particles = 0;
    std::uint64_t simulations = 0;
};

struct PmcConfig {
    int generations = 3;
    std::size_t particles = 100;
    double quantile = 0.5;
    std::uint64_t seed = 0;
    double acceptance_floor = 1e-5;
    std::uint64_t min_draws = 1000;
    int max_kernel_retries = 100;
    int workers = 0;
    DistanceWeights weights;

    void validate() const;
};

struct PmcCallbacks {
    std::function<void(const PmcProgress&)> progress;
    /// Polled between batches; returning true stops at the next generation boundary.
    std::function<bool()> cancelled;
};

PosteriorEnsemble pmc_abc(const ModelRunner& runner, const ObservationSet& obs, const PriorSpecification& prior,
                          const PmcConfig& config, const PmcCallbacks& callbacks = {});

std::vector<EpidemicParameters> bootstrap_resample(const PosteriorEnsemble& ensemble, std::size_t n, std::uint64_t seed);

struct PosteriorSummary {
    EpidemicParameters::Vector mean{};
    EpidemicParameters::Vector std{};
    Eigen::MatrixXd covariance;
};

PosteriorSummary posterior_summary(const PosteriorEnsemble& ensemble);

/// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace epicontrol
