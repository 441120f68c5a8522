#pragma once

// Lockdown optimisation: cost functional under posterior expectation, block-parametrised
// mobility schedules, annealing over schedules and the receding-horizon (NMPC) loop.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "epicontrol/abc.hpp"
#include "epicontrol/ensemble_io.hpp"
#include "epicontrol/anneal.hpp"
#include "epicontrol/seird.hpp"

namespace epicontrol {

struct CostWeights {
    double eps_school = 100.0;
    double eps_work = 100.0;
    double eps_other = 100.0;

    void validate() const;
};

struct ControlBounds {
    MobilityPoint lower{0.1, 0.31, 0.41};
    MobilityPoint upper{1.0, 1.0, 1.0};

    void validate() const;
    bool contains(const MobilityPoint& m) const;
};

inline constexpr std::size_t kControlChannels = 3;

/// Per-day controls for days start_day .. start_day + size() - 1. The control of day d acts on
/// the dynamics between day d and day d + 1.
struct ControlSchedule {
    int start_day = 0;
    std::vector<MobilityPoint> days;

    int end_day() const { return start_day + static_cast<int>(days.size()); }
    std::size_t size() const { return days.size(); }
    const MobilityPoint& at(int day) const;
    /// Throws ValidationError naming the first out-of-bounds day.
    void validate(const ControlBounds& bounds) const;
};

inline std::size_t block_count(int n_days, int block_length) {
    return static_cast<std::size_t>((n_days + block_length - 1) / block_length);
}

/// Block vector layout is channel-major: [school blocks..., work blocks..., other blocks...].
/// The last block may be shorter than block_length.
ControlSchedule schedule_from_blocks(int start_day, int n_days, int block_length, const std::vector<double>& x);
/// Block values taken from the first day of each block.
std::vector<double> blocks_from_schedule(const ControlSchedule& schedule, int block_length);

double hospital_penalty(double hospital_total, double h_max);

struct OptimizationConfig {
    int horizon = 90;             ///< T_h
    int prediction_horizon = 30;  ///< T_opt
    std::size_t n_posterior_samples = 50;
    double h_max = 10000.0;
    int block_length = 10;
    std::size_t anneal_budget = 2000;
    /// Days applied between re-optimisations; 1 is the plain receding-horizon loop.
    int replan_every = 1;
    /// false: a single optimisation over the whole horizon (requires prediction_horizon == horizon).
    bool receding = true;
    std::uint64_t seed = 0;
    int workers = 0;
    double dt = kDefaultDt;

    void validate() const;
};

/// Posterior samples with their states at t0, plus the fixed structural inputs.
struct ControlProblem {
    ContactMatrixSet contacts;
    PopulationCensus census;
    int t0 = 0;
    std::vector<EpidemicParameters> samples;
    std::vector<CompartmentState> initial_states;

    void validate() const;
};

/// Draws n samples from the ensemble and simulates each from day 0 to t0 under historical mobility.
ControlProblem prepare_control_problem(const PosteriorEnsemble& ensemble, const ModelSetup& setup, int t0,
                                       std::size_t n_samples, std::uint64_t seed, int workers = 0);

/// Trajectory of one sample from `initial` at schedule.start_day under the scheduled mobility.
Trajectory simulate_controlled(const EpidemicParameters& params, const CompartmentState& initial,
                               const ControlSchedule& schedule, const ContactMatrixSet& contacts,
                               const PopulationCensus& census, double dt = kDefaultDt);

ContactMatrix controlled_contacts(const ContactMatrixSet& contacts, const EpidemicParameters& params,
                                  const MobilityPoint& m);

struct CostBreakdown {
    double sanitary = 0.0;  ///< sum_t 1/2 E[sum_i dD_i(t) + Phi(I^C(t))]
    double economic = 0.0;  ///< sum_t sum_* eps_*/2 (1 - m_*(t))^2
    double terminal = 0.0;  ///< E[R] under the last scheduled day's contacts
    double total() const { return sanitary + economic + terminal; }
};

/// The schedule must start at problem.t0. Sanitary terms cover days t0+1 .. t0+T.
CostBreakdown evaluate_cost(const ControlSchedule& schedule, const ControlProblem& problem, const CostWeights& weights,
                            const OptimizationConfig& config);

struct ScheduleSearchResult {
    ControlSchedule schedule;
    std::vector<double> x;
    double cost = 0.0;
    double initial_cost = 0.0;
    std::size_t evaluations = 0;
};

using ScheduleObjective = std::function<double(const ControlSchedule&)>;

/// Anneals the block values of a schedule over [start_day, start_day + n_days).
ScheduleSearchResult anneal_schedule(const ScheduleObjective& objective, const ControlBounds& bounds, int start_day,
                                     int n_days, int block_length, const AnnealConfig& anneal,
                                     const std::optional<std::vector<double>>& x0 = std::nullopt);

struct BandPoint {
    int day = 0;
    double median = 0.0;
    double lower = 0.0;  ///< 0.5% quantile over samples
    double upper = 0.0;  ///< 99.5% quantile over samples
};

BandPoint band_of(int day, const std::vector<double>& values);

struct NmpcProgress {
    int day_index = 0;
    int horizon = 0;
};

struct NmpcCallbacks {
    std::function<void(const NmpcProgress&)> progress;
    /// Polled before each re-optimisation; a cancelled run keeps the schedule applied so far.
    std::function<bool()> cancelled;
};

struct NmpcResult {
    ControlSchedule applied;
    std::vector<BandPoint> hospital_band;  ///< days t0 .. t0 + applied days
    std::vector<BandPoint> r_band;         ///< control days t0 .. t0 + applied days - 1
    std::vector<double> step_costs;        ///< best predicted cost of each re-optimisation
    bool cancelled = false;
};

NmpcResult nmpc_run(const ControlProblem& problem, const CostWeights& weights, const ControlBounds& bounds,
                    const OptimizationConfig& config, const NmpcCallbacks& callbacks = {});

/// Median and 99% bands of a fixed schedule over the samples (no optimisation).
void fill_bands(const ControlProblem& problem, const ControlSchedule& schedule, const OptimizationConfig& config,
                NmpcResult& result);

inline constexpr int kOptimizationSchemaVersion = 1;

struct OptimizationArtifact {
    NmpcResult result;
    OptimizationConfig config;
    CostWeights weights;
    ControlBounds bounds;
    int t0 = 0;
    std::string calibration_ref;
    std::string dataset_ref;
    std::string previous_ref;
};

std::string optimization_to_json(const OptimizationArtifact& artifact);
OptimizationArtifact optimization_from_json(const std::string& text);

std::string format_schedule_csv(const ControlSchedule& schedule);
std::string format_band_csv(const std::vector<BandPoint>& band);

struct DynamicUpdateResult {
    CalibrationArtifact calibration;
    ControlProblem problem;
    NmpcResult nmpc;
};

/// Re-calibrates on the extended observations, re-derives the per-sample states at the new
/// t0 (the last observed day) and re-runs the receding-horizon loop from there.
/// Throws ConflictError when `observations` do not extend past the previous horizon.
DynamicUpdateResult dynamic_update(const CalibrationArtifact& previous, const std::string& previous_ref,
                                   const ObservationSet& observations, const ModelSetup& setup,
                                   const PmcConfig& recalibration, const CostWeights& weights,
                                   const ControlBounds& bounds, const OptimizationConfig& config,
                                   const PmcCallbacks& pmc_callbacks = {}, const NmpcCallbacks& nmpc_callbacks = {});

}  // namespace epicontrol
