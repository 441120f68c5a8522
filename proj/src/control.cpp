#include "epicontrol/control.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "epicontrol/csv_format.hpp"
#include "epicontrol/error.hpp"
#include "epicontrol/parallel.hpp"
#include "epicontrol/repro.hpp"
#include "epicontrol/rng.hpp"

namespace epicontrol {

using nlohmann::json;

void CostWeights::validate() const {
    for (double e : {eps_school, eps_work, eps_other}) {
        if (!(e >= 0.0) || !std::isfinite(e)) throw ValidationError("cost weights must be finite and >= 0");
    }
}

void ControlBounds::validate() const {
    const char* names[] = {"school", "work", "other"};
    const double lo[] = {lower.school, lower.work, lower.other};
    const double hi[] = {upper.school, upper.work, upper.other};
    for (int c = 0; c < 3; ++c) {
        if (!(lo[c] >= 0.0 && hi[c] <= 1.0 && lo[c] < hi[c])) {
            throw ValidationError(std::string("bounds for ") + names[c] + " must satisfy 0 <= lower < upper <= 1");
        }
    }
}

bool ControlBounds::contains(const MobilityPoint& m) const {
    return m.school >= lower.school && m.school <= upper.school && m.work >= lower.work && m.work <= upper.work &&
           m.other >= lower.other && m.other <= upper.other;
}

const MobilityPoint& ControlSchedule::at(int day) const {
    if (day < start_day || day >= end_day()) {
        throw ValidationError("schedule has no control for day " + std::to_string(day));
    }
    return days[static_cast<std::size_t>(day - start_day)];
}

void ControlSchedule::validate(const ControlBounds& bounds) const {
    for (std::size_t k = 0; k < days.size(); ++k) {
        if (!bounds.contains(days[k])) {
            throw ValidationError("control on day " + std::to_string(start_day + static_cast<int>(k)) + " is out of bounds");
        }
    }
}

ControlSchedule schedule_from_blocks(int start_day, int n_days, int block_length, const std::vector<double>& x) {
    if (n_days < 1 || block_length < 1) throw ValidationError("schedule needs n_days >= 1 and block_length >= 1");
    const std::size_t b = block_count(n_days, block_length);
    if (x.size() != kControlChannels * b) {
        throw ValidationError("expected " + std::to_string(kControlChannels * b) + " block values, got " +
                              std::to_string(x.size()));
    }
    ControlSchedule s;
    s.start_day = start_day;
    s.days.resize(static_cast<std::size_t>(n_days));
    for (int d = 0; d < n_days; ++d) {
        const auto k = static_cast<std::size_t>(d / block_length);
        s.days[static_cast<std::size_t>(d)] = {x[k], x[b + k], x[2 * b + k]};
    }
    return s;
}

std::vector<double> blocks_from_schedule(const ControlSchedule& schedule, int block_length) {
    const int n = static_cast<int>(schedule.size());
    const std::size_t b = block_count(n, block_length);
    std::vector<double> x(kControlChannels * b);
    for (std::size_t k = 0; k < b; ++k) {
        const auto& m = schedule.days[k * static_cast<std::size_t>(block_length)];
        x[k] = m.school;
        x[b + k] = m.work;
        x[2 * b + k] = m.other;
    }
    return x;
}

double hospital_penalty(double hospital_total, double h_max) { return std::max(hospital_total - h_max, 0.0); }

void OptimizationConfig::validate() const {
    if (horizon < 1) throw ValidationError("horizon must be >= 1 day");
    if (prediction_horizon < 1 || prediction_horizon > horizon) {
        throw ValidationError("prediction horizon must satisfy 0 < T_opt <= T_h");
    }
    if (n_posterior_samples < 1) throw ValidationError("n_posterior_samples must be >= 1");
    if (!(h_max >= 0.0)) throw ValidationError("H_max must be >= 0");
    if (block_length < 1) throw ValidationError("block length must be >= 1");
    if (anneal_budget < 1) throw ValidationError("annealing budget must be >= 1");
    if (replan_every < 1) throw ValidationError("replan interval must be >= 1");
    if (!receding && prediction_horizon != horizon) {
        throw ValidationError("a single-shot optimisation needs the prediction horizon equal to the horizon");
    }
}

void ControlProblem::validate() const {
    census.validate();
    contacts.validate();
    if (samples.empty()) throw ValidationError("control problem has no posterior samples");
    if (samples.size() != initial_states.size()) throw ValidationError("one initial state per sample is required");
    for (const auto& p : samples) p.validate();
}

ControlProblem prepare_control_problem(const PosteriorEnsemble& ensemble, const ModelSetup& setup, int t0,
                                       std::size_t n_samples, std::uint64_t seed, int workers) {
    if (t0 < 0) throw ValidationError("t0 must be >= 0");
    ControlProblem problem;
    problem.contacts = setup.contacts;
    problem.census = setup.census;
    problem.t0 = t0;
    problem.samples = bootstrap_resample(ensemble, n_samples, derive_seed(seed, 0x5A3B1E5ULL));
    problem.initial_states.resize(n_samples);
    parallel_for(n_samples, workers, [&](std::size_t k) {
        problem.initial_states[k] = setup.simulate(problem.samples[k], t0).states.back();
    });
    return problem;
}

ContactMatrix controlled_contacts(const ContactMatrixSet& contacts, const EpidemicParameters& params,
                                  const MobilityPoint& m) {
    return assemble_contact_matrix(contacts, alphas_from_mobility(m, params));
}

Trajectory simulate_controlled(const EpidemicParameters& params, const CompartmentState& initial,
                               const ControlSchedule& schedule, const ContactMatrixSet& contacts,
                               const PopulationCensus& census, double dt) {
    DynamicsContext ctx{params, census,
                        [&](int day) { return controlled_contacts(contacts, params, schedule.at(day)); }};
    return integrate_days(initial, schedule.start_day, static_cast<int>(schedule.size()), ctx, dt);
}

CostBreakdown evaluate_cost(const ControlSchedule& schedule, const ControlProblem& problem, const CostWeights& weights,
                            const OptimizationConfig& config) {
    if (schedule.start_day != problem.t0) throw ValidationError("schedule must start at the problem's t0");
    if (schedule.days.empty()) throw ValidationError("schedule is empty");
    const std::size_t n = problem.samples.size();
    std::vector<double> sanitary(n, 0.0);
    std::vector<double> terminal(n, 0.0);
    parallel_for(n, config.workers, [&](std::size_t k) {
        const auto& params = problem.samples[k];
        const Trajectory traj =
            simulate_controlled(params, problem.initial_states[k], schedule, problem.contacts, problem.census, config.dt);
        double s = 0.0;
        for (std::size_t t = 1; t < traj.states.size(); ++t) {
            double deaths = 0.0;
            for (double d : traj.daily_deaths[t]) deaths += d;
            s += 0.5 * (deaths + hospital_penalty(traj.hospital_total[t], config.h_max));
        }
        sanitary[k] = s;
        terminal[k] = reproduction_number(params, controlled_contacts(problem.contacts, params, schedule.days.back()),
                                          problem.census);
    });
    CostBreakdown c;
    for (std::size_t k = 0; k < n; ++k) {
        c.sanitary += sanitary[k];
        c.terminal += terminal[k];
    }
    c.sanitary /= static_cast<double>(n);
    c.terminal /= static_cast<double>(n);
    for (const auto& m : schedule.days) {
        c.economic += 0.5 * weights.eps_school * (1.0 - m.school) * (1.0 - m.school) +
                      0.5 * weights.eps_work * (1.0 - m.work) * (1.0 - m.work) +
                      0.5 * weights.eps_other * (1.0 - m.other) * (1.0 - m.other);
    }
    return c;
}

ScheduleSearchResult anneal_schedule(const ScheduleObjective& objective, const ControlBounds& bounds, int start_day,
                                     int n_days, int block_length, const AnnealConfig& anneal,
                                     const std::optional<std::vector<double>>& x0) {
    bounds.validate();
    const std::size_t b = block_count(n_days, block_length);
    std::vector<double> lower(kControlChannels * b);
    std::vector<double> upper(kControlChannels * b);
    for (std::size_t k = 0; k < b; ++k) {
        lower[k] = bounds.lower.school;
        upper[k] = bounds.upper.school;
        lower[b + k] = bounds.lower.work;
        upper[b + k] = bounds.upper.work;
        lower[2 * b + k] = bounds.lower.other;
        upper[2 * b + k] = bounds.upper.other;
    }
    auto f = [&](const std::vector<double>& x) {
        return objective(schedule_from_blocks(start_day, n_days, block_length, x));
    };
    AnnealResult r = dual_annealing(f, lower, upper, anneal, x0);
    ScheduleSearchResult out;
    // Clip once more so the returned schedule respects the bounds exactly.
    for (std::size_t i = 0; i < r.x.size(); ++i) r.x[i] = std::clamp(r.x[i], lower[i], upper[i]);
    out.schedule = schedule_from_blocks(start_day, n_days, block_length, r.x);
    out.x = std::move(r.x);
    out.cost = r.cost;
    out.initial_cost = r.initial_cost;
    out.evaluations = r.evaluations;
    return out;
}

BandPoint band_of(int day, const std::vector<double>& values) {
    return {day, quantile(values, 0.5), quantile(values, 0.005), quantile(values, 0.995)};
}

namespace {

std::vector<double> warm_start(const std::vector<double>& previous, std::size_t blocks, std::size_t previous_blocks) {
    if (previous.empty()) return {};
    std::vector<double> x(kControlChannels * blocks);
    for (std::size_t c = 0; c < kControlChannels; ++c) {
        for (std::size_t k = 0; k < blocks; ++k) {
            x[c * blocks + k] = previous[c * previous_blocks + std::min(k, previous_blocks - 1)];
        }
    }
    return x;
}

}  // namespace

void fill_bands(const ControlProblem& problem, const ControlSchedule& schedule, const OptimizationConfig& config,
                NmpcResult& result) {
    result.hospital_band.clear();
    result.r_band.clear();
    const std::size_t n = problem.samples.size();
    const std::size_t days = schedule.size();
    std::vector<std::vector<double>> hosp(n);
    std::vector<std::vector<double>> rr(n);
    parallel_for(n, config.workers, [&](std::size_t k) {
        const auto& params = problem.samples[k];
        if (days > 0) {
            hosp[k] = simulate_controlled(params, problem.initial_states[k], schedule, problem.contacts, problem.census,
                                          config.dt)
                          .hospital_total;
        } else {
            hosp[k] = {problem.initial_states[k].hospital_total()};
        }
        for (const auto& m : schedule.days) {
            rr[k].push_back(reproduction_number(params, controlled_contacts(problem.contacts, params, m), problem.census));
        }
    });
    std::vector<double> column(n);
    for (std::size_t t = 0; t <= days; ++t) {
        for (std::size_t k = 0; k < n; ++k) column[k] = hosp[k][t];
        result.hospital_band.push_back(band_of(schedule.start_day + static_cast<int>(t), column));
    }
    for (std::size_t t = 0; t < days; ++t) {
        for (std::size_t k = 0; k < n; ++k) column[k] = rr[k][t];
        result.r_band.push_back(band_of(schedule.start_day + static_cast<int>(t), column));
    }
}

NmpcResult nmpc_run(const ControlProblem& problem, const CostWeights& weights, const ControlBounds& bounds,
                    const OptimizationConfig& config, const NmpcCallbacks& callbacks) {
    config.validate();
    weights.validate();
    bounds.validate();
    problem.validate();

    NmpcResult result;
    result.applied.start_day = problem.t0;
    ControlProblem current = problem;
    std::vector<double> previous_x;
    std::size_t previous_blocks = 0;
    int step = 0;
    while (static_cast<int>(result.applied.size()) < config.horizon) {
        const int applied = static_cast<int>(result.applied.size());
        if (callbacks.cancelled && callbacks.cancelled()) {
            result.cancelled = true;
            break;
        }
        if (callbacks.progress) callbacks.progress({applied, config.horizon});
        const int t = problem.t0 + applied;
        const int window = config.prediction_horizon;
        const std::size_t blocks = block_count(window, config.block_length);
        AnnealConfig anneal;
        anneal.budget = config.anneal_budget;
        anneal.seed = derive_seed(config.seed, 0x4E4D5043ULL, static_cast<std::uint64_t>(step));
        std::optional<std::vector<double>> x0;
        if (!previous_x.empty()) x0 = warm_start(previous_x, blocks, previous_blocks);
        auto objective = [&](const ControlSchedule& s) { return evaluate_cost(s, current, weights, config).total(); };
        ScheduleSearchResult best = anneal_schedule(objective, bounds, t, window, config.block_length, anneal, x0);
        result.step_costs.push_back(best.cost);
        previous_x = best.x;
        previous_blocks = blocks;

        const int apply = config.receding ? std::min(config.replan_every, config.horizon - applied) : config.horizon;
        ControlSchedule chunk;
        chunk.start_day = t;
        chunk.days.assign(best.schedule.days.begin(), best.schedule.days.begin() + apply);
        for (const auto& m : chunk.days) result.applied.days.push_back(m);
        for (std::size_t k = 0; k < current.samples.size(); ++k) {
            current.initial_states[k] = simulate_controlled(current.samples[k], current.initial_states[k], chunk,
                                                            current.contacts, current.census, config.dt)
                                            .states.back();
        }
        current.t0 = t + apply;
        ++step;
    }
    if (callbacks.progress && !result.cancelled) {
        callbacks.progress({static_cast<int>(result.applied.size()), config.horizon});
    }
    result.applied.validate(bounds);
    fill_bands(problem, result.applied, config, result);
    return result;
}

namespace {

json band_json(const std::vector<BandPoint>& band) {
    json arr = json::array();
    for (const auto& b : band) {
        arr.push_back({{"day", b.day}, {"median", b.median}, {"lower", b.lower}, {"upper", b.upper}});
    }
    return arr;
}

std::vector<BandPoint> band_from(const json& arr) {
    std::vector<BandPoint> out;
    for (const auto& b : arr) {
        out.push_back({b.at("day").get<int>(), b.at("median").get<double>(), b.at("lower").get<double>(),
                       b.at("upper").get<double>()});
    }
    return out;
}

}  // namespace

std::string optimization_to_json(const OptimizationArtifact& a) {
    json schedule = json::array();
    for (std::size_t k = 0; k < a.result.applied.size(); ++k) {
        const auto& m = a.result.applied.days[k];
        schedule.push_back({{"day", a.result.applied.start_day + static_cast<int>(k)},
                            {"m_school", m.school},
                            {"m_work", m.work},
                            {"m_other", m.other}});
    }
    const auto& c = a.config;
    json j{
        {"schema_version", kOptimizationSchemaVersion},
        {"kind", "optimization"},
        {"seed", c.seed},
        {"calibration", a.calibration_ref},
        {"dataset", a.dataset_ref},
        {"previous", a.previous_ref},
        {"t0", a.t0},
        {"config",
         {{"horizon", c.horizon},
          {"prediction_horizon", c.prediction_horizon},
          {"n_posterior_samples", c.n_posterior_samples},
          {"h_max", c.h_max},
          {"block_length", c.block_length},
          {"anneal_budget", c.anneal_budget},
          {"replan_every", c.replan_every},
          {"receding", c.receding},
          {"dt", c.dt}}},
        {"weights", {{"eps_school", a.weights.eps_school}, {"eps_work", a.weights.eps_work}, {"eps_other", a.weights.eps_other}}},
        {"bounds",
         {{"school", {a.bounds.lower.school, a.bounds.upper.school}},
          {"work", {a.bounds.lower.work, a.bounds.upper.work}},
          {"other", {a.bounds.lower.other, a.bounds.upper.other}}}},
        {"cancelled", a.result.cancelled},
        {"schedule", schedule},
        {"hospital_band", band_json(a.result.hospital_band)},
        {"r_band", band_json(a.result.r_band)},
        {"step_costs", a.result.step_costs},
    };
    return j.dump(1) + "\n";
}

OptimizationArtifact optimization_from_json(const std::string& text) {
    OptimizationArtifact a;
    try {
        const json j = json::parse(text);
        if (j.at("schema_version").get<int>() != kOptimizationSchemaVersion) {
            throw ValidationError("unsupported optimization schema_version");
        }
        a.config.seed = j.at("seed").get<std::uint64_t>();
        a.calibration_ref = j.value("calibration", std::string());
        a.dataset_ref = j.value("dataset", std::string());
        a.previous_ref = j.value("previous", std::string());
        a.t0 = j.at("t0").get<int>();
        const json& c = j.at("config");
        a.config.horizon = c.at("horizon").get<int>();
        a.config.prediction_horizon = c.at("prediction_horizon").get<int>();
        a.config.n_posterior_samples = c.at("n_posterior_samples").get<std::size_t>();
        a.config.h_max = c.at("h_max").get<double>();
        a.config.block_length = c.at("block_length").get<int>();
        a.config.anneal_budget = c.at("anneal_budget").get<std::size_t>();
        a.config.replan_every = c.value("replan_every", 1);
        a.config.receding = c.value("receding", true);
        a.config.dt = c.value("dt", kDefaultDt);
        const json& w = j.at("weights");
        a.weights = {w.at("eps_school").get<double>(), w.at("eps_work").get<double>(), w.at("eps_other").get<double>()};
        const json& b = j.at("bounds");
        a.bounds.lower = {b.at("school")[0].get<double>(), b.at("work")[0].get<double>(), b.at("other")[0].get<double>()};
        a.bounds.upper = {b.at("school")[1].get<double>(), b.at("work")[1].get<double>(), b.at("other")[1].get<double>()};
        a.result.cancelled = j.value("cancelled", false);
        a.result.applied.start_day = a.t0;
        for (const auto& d : j.at("schedule")) {
            a.result.applied.days.push_back(
                {d.at("m_school").get<double>(), d.at("m_work").get<double>(), d.at("m_other").get<double>()});
        }
        a.result.hospital_band = band_from(j.at("hospital_band"));
        a.result.r_band = band_from(j.at("r_band"));
        a.result.step_costs = j.value("step_costs", std::vector<double>{});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid optimization artifact: ") + e.what());
    }
    return a;
}

std::string format_schedule_csv(const ControlSchedule& schedule) {
    CsvWriter w({"day", "m_school", "m_work", "m_other"});
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        const auto& m = schedule.days[k];
        w.add_numeric_row({static_cast<double>(schedule.start_day + static_cast<int>(k)), m.school, m.work, m.other});
    }
    return w.str();
}

std::string format_band_csv(const std::vector<BandPoint>& band) {
    CsvWriter w({"day", "median", "lower", "upper"});
    for (const auto& b : band) w.add_numeric_row({static_cast<double>(b.day), b.median, b.lower, b.upper});
    return w.str();
}

DynamicUpdateResult dynamic_update(const CalibrationArtifact& previous, const std::string& previous_ref,
                                   const ObservationSet& observations, const ModelSetup& setup,
                                   const PmcConfig& recalibration, const CostWeights& weights,
                                   const ControlBounds& bounds, const OptimizationConfig& config,
                                   const PmcCallbacks& pmc_callbacks, const NmpcCallbacks& nmpc_callbacks) {
    const int new_last = std::max(observations.last_day(), observations.hospital_last_day());
    const int old_last = std::max(previous.last_death_day, previous.hospital_last_day);
    if (new_last <= old_last) {
        throw ConflictError("observations end on day " + std::to_string(new_last) +
                            ", which does not extend the previous horizon (day " + std::to_string(old_last) +
                            "); nothing to update");
    }
    config.validate();
    DynamicUpdateResult out;
    const ModelRunner runner = make_model_runner(setup, observations);
    out.calibration.ensemble = pmc_abc(runner, observations, previous.prior, recalibration, pmc_callbacks);
    out.calibration.prior = previous.prior;
    out.calibration.config = recalibration;
    out.calibration.dataset_ref = previous.dataset_ref;
    out.calibration.region = previous.region;
    out.calibration.first_death_day = observations.first_death_day;
    out.calibration.last_death_day = observations.last_day();
    out.calibration.hospital_first_day = observations.hospital_first_day;
    out.calibration.hospital_last_day = observations.hospital_last_day();
    out.calibration.previous_ref = previous_ref;
    if (out.calibration.ensemble.empty()) throw NumericError("re-calibration produced an empty ensemble");
    out.problem = prepare_control_problem(out.calibration.ensemble, setup, new_last, config.n_posterior_samples,
                                          config.seed, config.workers);
    out.nmpc = nmpc_run(out.problem, weights, bounds, config, nmpc_callbacks);
    return out;
}

}  // namespace epicontrol
