#include "epicontrol/abc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "epicontrol/error.hpp"
#include "epicontrol/parallel.hpp"
#include "epicontrol/rng.hpp"

namespace epicontrol {

void DistanceWeights::validate() const {
    for (double w : w_D) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("w_D entries must be finite and >= 0");
    }
    if (!(w_I >= 0.0) || !std::isfinite(w_I)) throw ValidationError("w_I must be finite and >= 0");
}

double distance(const ObservationSet& sim, const ObservationSet& obs, const DistanceWeights& w) {
    if (sim.first_death_day != obs.first_death_day || sim.daily_deaths.size() != obs.daily_deaths.size()) {
        throw ValidationError("death series are not aligned: simulated days [" + std::to_string(sim.first_death_day) +
                              ", " + std::to_string(sim.last_day()) + "] vs observed [" +
                              std::to_string(obs.first_death_day) + ", " + std::to_string(obs.last_day()) + "]");
    }
    if (sim.hospital_first_day != obs.hospital_first_day || sim.hospital.size() != obs.hospital.size()) {
        throw ValidationError("hospital series are not aligned: simulated days [" +
                              std::to_string(sim.hospital_first_day) + ", " + std::to_string(sim.hospital_last_day()) +
                              "] vs observed [" + std::to_string(obs.hospital_first_day) + ", " +
                              std::to_string(obs.hospital_last_day()) + "]");
    }
    AgeVector d_D{};
    for (std::size_t t = 0; t < sim.daily_deaths.size(); ++t) {
        for (std::size_t i = 0; i < kAgeGroups; ++i) {
            const double diff = sim.daily_deaths[t][i] - obs.daily_deaths[t][i];
            d_D[i] += diff * diff;
        }
    }
    double d_I = 0.0;
    for (std::size_t t = 0; t < sim.hospital.size(); ++t) {
        const double diff = sim.hospital[t] - obs.hospital[t];
        d_I += diff * diff;
    }
    double total = w.w_I * d_I;
    for (std::size_t i = 0; i < kAgeGroups; ++i) total += w.w_D[i] * d_D[i];
    return total;
}

ModelRunner make_model_runner(const ModelSetup& setup, const ObservationSet& obs) {
    const int first_death = obs.first_death_day;
    const int last_death = obs.last_day();
    const int hospital_first = obs.hospital_first_day;
    const std::size_t hospital_days = obs.hospital.size();
    const int end_day = std::max(last_death, obs.hospital_last_day());
    return [setup, first_death, last_death, hospital_first, hospital_days, end_day](const EpidemicParameters& p) {
        const Trajectory traj = setup.simulate(p, end_day);
        ObservationSet out;
        out.first_death_day = first_death;
        out.hospital_first_day = hospital_first;
        for (int d = first_death; d <= last_death; ++d) out.daily_deaths.push_back(traj.deaths_on(d));
        for (std::size_t k = 0; k < hospital_days; ++k) out.hospital.push_back(traj.hospital_on(hospital_first + static_cast<int>(k)));
        return out;
    };
}

std::string to_string(EnsembleStatus status) {
    switch (status) {
        case EnsembleStatus::Ok: return "ok";
        case EnsembleStatus::AcceptanceFloor: return "acceptance-floor";
        case EnsembleStatus::Cancelled: return "cancelled";
    }
    return "ok";
}

EnsembleStatus ensemble_status_from_string(const std::string& name) {
    if (name == "ok") return EnsembleStatus::Ok;
    if (name == "acceptance-floor") return EnsembleStatus::AcceptanceFloor;
    if (name == "cancelled") return EnsembleStatus::Cancelled;
    throw ValidationError("unknown ensemble status '" + name + "'");
}

void PosteriorEnsemble::validate(const PriorSpecification& prior) const {
    double sum = 0.0;
    for (const auto& p : particles) {
        if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) throw ValidationError("particle weights must be >= 0");
        if (!prior.in_support(p.theta)) throw ValidationError("particle outside the prior support");
        sum += p.weight;
    }
    if (!particles.empty() && std::abs(sum - 1.0) > 1e-9) throw ValidationError("particle weights do not sum to 1");
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) return values[lo];
    return values[lo] + frac * (values[hi] - values[lo]);
}

void PmcConfig::validate() const {
    if (generations < 1) throw ValidationError("generations must be >= 1");
    if (particles < 2) throw ValidationError("particles must be >= 2");
    if (!(quantile > 0.0 && quantile < 1.0)) throw ValidationError("quantile must lie in (0, 1)");
    if (!(acceptance_floor >= 0.0 && acceptance_floor < 1.0)) throw ValidationError("acceptance floor must lie in [0, 1)");
    if (max_kernel_retries < 1) throw ValidationError("max kernel retries must be >= 1");
    weights.validate();
}

namespace {

double safe_distance(const ModelRunner& runner, const ObservationSet& obs, const EpidemicParameters& p,
                     const DistanceWeights& w) {
    try {
        const double d = distance(runner(p), obs, w);
        return std::isfinite(d) ? d : std::numeric_limits<double>::infinity();
    } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
    }
}

struct Proposal {
    EpidemicParameters::Vector theta{};
    bool valid = false;
    double distance = std::numeric_limits<double>::infinity();
};

// Index-ordered acceptance loop shared by rejection and every PMC generation. Proposals are
// produced per index from their own RNG stream, evaluated in parallel batches and consumed
// strictly in index order, so the outcome does not depend on the worker count or batch size.
struct SweepResult {
    std::vector<Particle> accepted;
    std::uint64_t draws = 0;
    bool floor_hit = false;
    bool cancelled = false;
};

struct SweepConfig {
    double tolerance = 0.0;
    std::size_t n_target = 0;
    double floor = 1e-5;
    std::uint64_t min_draws = 1000;
    std::uint64_t max_draws = 0;
    int workers = 0;
};

template <typename ProposeFn>
SweepResult sweep(const ModelRunner& runner, const ObservationSet& obs, const DistanceWeights& weights,
                  const SweepConfig& cfg, ProposeFn&& propose, std::vector<Proposal> precomputed,
                  const PmcCallbacks& callbacks, PmcProgress progress) {
    SweepResult out;
    std::uint64_t max_draws = cfg.max_draws;
    if (max_draws == 0) {
        const double cap = cfg.floor > 0.0 ? static_cast<double>(cfg.n_target) / cfg.floor : 1e12;
        max_draws = static_cast<std::uint64_t>(std::max(cap, static_cast<double>(cfg.min_draws)));
    }
    // A rate below the floor is only observable once 1/floor draws have been made.
    std::uint64_t floor_check = cfg.min_draws;
    if (cfg.floor > 0.0) floor_check = std::max(floor_check, static_cast<std::uint64_t>(std::ceil(1.0 / cfg.floor)));
    std::uint64_t next_index = 0;
    std::vector<Proposal> batch = std::move(precomputed);
    bool have_batch = !batch.empty();
    while (out.accepted.size() < cfg.n_target) {
        if (!have_batch) {
            if (callbacks.cancelled && callbacks.cancelled()) {
                out.cancelled = true;
                return out;
            }
            const std::size_t needed = cfg.n_target - out.accepted.size();
            const double rate = out.draws > 0 ? std::max(static_cast<double>(out.accepted.size()) / static_cast<double>(out.draws), 0.02) : 0.5;
            auto size = static_cast<std::uint64_t>(std::ceil(static_cast<double>(needed) / rate));
            size = std::clamp<std::uint64_t>(size, 16, std::max<std::uint64_t>(4 * cfg.n_target, 64));
            size = std::min(size, max_draws - next_index);
            batch.assign(size, Proposal{});
            const std::uint64_t base = next_index;
            parallel_for(batch.size(), cfg.workers, [&](std::size_t k) {
                Proposal& p = batch[k];
                p.valid = propose(base + k, p.theta);
                if (p.valid) p.distance = safe_distance(runner, obs, EpidemicParameters::from_vector(p.theta), weights);
            });
        }
        have_batch = false;
        next_index += batch.size();
        for (const auto& p : batch) {
            ++out.draws;
            if (p.valid && p.distance < cfg.tolerance) out.accepted.push_back({p.theta, 0.0, p.distance});
            if (out.accepted.size() >= cfg.n_target) break;
            if (out.draws >= floor_check &&
                static_cast<double>(out.accepted.size()) < cfg.floor * static_cast<double>(out.draws)) {
                out.floor_hit = true;
                break;
            }
            if (out.draws >= max_draws) {
                out.floor_hit = true;
                break;
            }
        }
        if (callbacks.progress) {
            progress.accepted = out.accepted.size();
            progress.simulations += batch.size();
            callbacks.progress(progress);
        }
        if (out.floor_hit) break;
    }
    return out;
}

void normalize_weights(std::vector<Particle>& particles) {
    double sum = 0.0;
    for (const auto& p : particles) sum += p.weight;
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        for (auto& p : particles) p.weight = 1.0 / static_cast<double>(particles.size());
        return;
    }
    for (auto& p : particles) p.weight /= sum;
}

std::pair<double, double> weighted_beta_moments(const std::vector<Particle>& particles) {
    double mean = 0.0;
    for (const auto& p : particles) mean += p.weight * p.theta[0];
    double var = 0.0;
    for (const auto& p : particles) var += p.weight * (p.theta[0] - mean) * (p.theta[0] - mean);
    return {mean, std::sqrt(std::max(var, 0.0))};
}

GenerationRecord make_record(int generation, double tolerance, std::uint64_t sims, const std::vector<Particle>& particles) {
    const auto [mean, sd] = weighted_beta_moments(particles);
    return {generation, tolerance, sims, particles.size(), mean, sd};
}

constexpr std::size_t kDim = EpidemicParameters::kCount;
using VecD = Eigen::Matrix<double, kDim, 1>;
using MatD = Eigen::Matrix<double, kDim, kDim>;

VecD to_eigen(const EpidemicParameters::Vector& v) { return Eigen::Map<const VecD>(v.data()); }

// Lower Cholesky factor of 2 x the weighted covariance, with diagonal jitter for degenerate
// directions (e.g. a parameter that every particle shares).
MatD kernel_factor(const std::vector<Particle>& particles, const PriorSpecification& prior) {
    VecD mean = VecD::Zero();
    for (const auto& p : particles) mean += p.weight * to_eigen(p.theta);
    MatD cov = MatD::Zero();
    for (const auto& p : particles) {
        const VecD d = to_eigen(p.theta) - mean;
        cov += p.weight * d * d.transpose();
    }
    cov *= 2.0;
    for (std::size_t i = 0; i < kDim; ++i) {
        const double range = prior.marginals[i].upper - prior.marginals[i].lower;
        cov(i, i) += 1e-12 * range * range;
    }
    for (int attempt = 0; attempt < 30; ++attempt) {
        Eigen::LLT<MatD> llt(cov);
        if (llt.info() == Eigen::Success) return llt.matrixL();
        cov.diagonal() *= 1.0 + 1e-6 * std::pow(10.0, attempt);
    }
    throw NumericError("perturbation kernel covariance is not positive definite");
}

PosteriorEnsemble finalize(std::vector<Particle> particles, int generation, double tolerance, EnsembleStatus status,
                           std::uint64_t draws, std::vector<GenerationRecord> history) {
    PosteriorEnsemble e;
    e.particles = std::move(particles);
    e.generation = generation;
    e.tolerance = tolerance;
    e.status = status;
    e.acceptance_rate = draws > 0 ? static_cast<double>(e.particles.size()) / static_cast<double>(draws) : 0.0;
    e.history = std::move(history);
    return e;
}

}  // namespace

PosteriorEnsemble abc_rejection(const ModelRunner& runner, const ObservationSet& obs, const PriorSpecification& prior,
                                const RejectionConfig& config) {
    if (!(config.tolerance >= 0.0)) throw ValidationError("tolerance must be >= 0");
    if (config.n_target < 1) throw ValidationError("n_target must be >= 1");
    prior.validate();
    config.weights.validate();
    obs.validate();
    SweepConfig sc{config.tolerance, config.n_target, config.acceptance_floor, config.min_draws, config.max_draws,
                   config.workers};
    auto propose = [&](std::uint64_t index, EpidemicParameters::Vector& theta) {
        Rng rng = make_rng(config.seed, 0, index);
        theta = prior.sample(rng);
        return true;
    };
    SweepResult r = sweep(runner, obs, config.weights, sc, propose, {}, {}, {});
    for (auto& p : r.accepted) p.weight = 1.0;
    normalize_weights(r.accepted);
    const auto status = r.floor_hit ? EnsembleStatus::AcceptanceFloor : EnsembleStatus::Ok;
    std::vector<GenerationRecord> history{make_record(0, config.tolerance, r.draws, r.accepted)};
    return finalize(std::move(r.accepted), 0, config.tolerance, status, r.draws, std::move(history));
}

PosteriorEnsemble pmc_abc(const ModelRunner& runner, const ObservationSet& obs, const PriorSpecification& prior,
                          const PmcConfig& config, const PmcCallbacks& callbacks) {
    config.validate();
    prior.validate();
    obs.validate();
    const std::size_t n = config.particles;

    // Generation 0: pilot prior-predictive draws fix gamma_0 and are reused as the first
    // proposals of the rejection sweep.
    auto prior_propose = [&](std::uint64_t index, EpidemicParameters::Vector& theta) {
        Rng rng = make_rng(config.seed, 0, index);
        theta = prior.sample(rng);
        return true;
    };
    std::vector<Proposal> pilot(n);
    parallel_for(n, config.workers, [&](std::size_t k) {
        Proposal& p = pilot[k];
        p.valid = prior_propose(k, p.theta);
        p.distance = safe_distance(runner, obs, EpidemicParameters::from_vector(p.theta), config.weights);
    });
    std::vector<double> pilot_d;
    for (const auto& p : pilot) pilot_d.push_back(p.distance);
    double tolerance = quantile(pilot_d, config.quantile);

    PmcProgress progress{0, config.generations, 0, n, 0};
    if (callbacks.progress) {
        progress.simulations = n;
        callbacks.progress(progress);
        progress.simulations = 0;
    }
    SweepConfig sc{tolerance, n, config.acceptance_floor, config.min_draws, 0, config.workers};
    SweepResult r = sweep(runner, obs, config.weights, sc, prior_propose, std::move(pilot), callbacks, progress);
    std::uint64_t total_sims = r.draws;
    for (auto& p : r.accepted) p.weight = 1.0;
    normalize_weights(r.accepted);
    std::vector<GenerationRecord> history{make_record(0, tolerance, r.draws, r.accepted)};
    if (r.cancelled) return finalize(std::move(r.accepted), 0, tolerance, EnsembleStatus::Cancelled, r.draws, history);
    if (r.floor_hit || r.accepted.empty()) {
        return finalize(std::move(r.accepted), 0, tolerance, EnsembleStatus::AcceptanceFloor, r.draws, history);
    }
    std::vector<Particle> current = std::move(r.accepted);
    std::uint64_t current_draws = r.draws;

    for (int g = 1; g < config.generations; ++g) {
        if (callbacks.cancelled && callbacks.cancelled()) {
            return finalize(std::move(current), g - 1, tolerance, EnsembleStatus::Cancelled, current_draws, history);
        }
        std::vector<double> prev_d;
        for (const auto& p : current) prev_d.push_back(p.distance);
        const double next_tolerance = quantile(prev_d, config.quantile);

        const MatD L = kernel_factor(current, prior);
        std::vector<double> prev_w;
        for (const auto& p : current) prev_w.push_back(p.weight);

        auto propose = [&](std::uint64_t index, EpidemicParameters::Vector& theta) {
            Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(g), index);
            std::discrete_distribution<std::size_t> pick(prev_w.begin(), prev_w.end());
            std::normal_distribution<double> z01(0.0, 1.0);
            const VecD centre = to_eigen(current[pick(rng)].theta);
            for (int attempt = 0; attempt < config.max_kernel_retries; ++attempt) {
                VecD z;
                for (std::size_t i = 0; i < kDim; ++i) z[static_cast<Eigen::Index>(i)] = z01(rng);
                const VecD x = centre + L * z;
                for (std::size_t i = 0; i < kDim; ++i) theta[i] = x[static_cast<Eigen::Index>(i)];
                if (prior.in_support(theta)) return true;
            }
            return false;
        };
        progress.generation = g;
        progress.accepted = 0;
        SweepConfig gsc{next_tolerance, n, config.acceptance_floor, config.min_draws, 0, config.workers};
        SweepResult gr = sweep(runner, obs, config.weights, gsc, propose, {}, callbacks, progress);
        total_sims += gr.draws;
        progress.simulations = total_sims;
        if (gr.cancelled) {
            return finalize(std::move(current), g - 1, tolerance, EnsembleStatus::Cancelled, current_draws, history);
        }
        if (gr.floor_hit || gr.accepted.empty()) {
            // Keep the last complete generation; a partial population would bias the weights.
            return finalize(std::move(current), g - 1, tolerance, EnsembleStatus::AcceptanceFloor, current_draws, history);
        }

        // Importance weights w ~ pi(theta) / sum_k w_k K(theta | theta_k), in log space.
        const MatD Linv = L.triangularView<Eigen::Lower>().solve(MatD::Identity());
        std::vector<double> log_w(gr.accepted.size());
        for (std::size_t a = 0; a < gr.accepted.size(); ++a) {
            const VecD x = to_eigen(gr.accepted[a].theta);
            std::vector<double> terms(current.size());
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < current.size(); ++k) {
                const VecD u = Linv * (x - to_eigen(current[k].theta));
                terms[k] = std::log(std::max(current[k].weight, 1e-300)) - 0.5 * u.squaredNorm();
                mx = std::max(mx, terms[k]);
            }
            double s = 0.0;
            for (double t : terms) s += std::exp(t - mx);
            log_w[a] = prior.log_density(gr.accepted[a].theta) - (mx + std::log(s));
        }
        const double mx = *std::max_element(log_w.begin(), log_w.end());
        for (std::size_t a = 0; a < gr.accepted.size(); ++a) gr.accepted[a].weight = std::exp(log_w[a] - mx);
        normalize_weights(gr.accepted);

        current = std::move(gr.accepted);
        current_draws = gr.draws;
        tolerance = next_tolerance;
        history.push_back(make_record(g, tolerance, gr.draws, current));
    }
    return finalize(std::move(current), config.generations - 1, tolerance, EnsembleStatus::Ok, current_draws,
                    std::move(history));
}

std::vector<EpidemicParameters> bootstrap_resample(const PosteriorEnsemble& ensemble, std::size_t n, std::uint64_t seed) {
    if (ensemble.empty()) throw ValidationError("cannot resample an empty ensemble");
    std::vector<double> w;
    for (const auto& p : ensemble.particles) w.push_back(p.weight);
    if (!(std::accumulate(w.begin(), w.end(), 0.0) > 0.0)) throw ValidationError("ensemble weights are all zero");
    Rng rng = make_rng(seed, 0xB0075742ULL);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::vector<EpidemicParameters> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(ensemble.particles[pick(rng)].params());
    return out;
}

PosteriorSummary posterior_summary(const PosteriorEnsemble& ensemble) {
    if (ensemble.empty()) throw ValidationError("cannot summarise an empty ensemble");
    double total = 0.0;
    for (const auto& p : ensemble.particles) total += p.weight;
    if (!(total > 0.0)) throw ValidationError("ensemble weights are all zero");
    PosteriorSummary s;
    VecD mean = VecD::Zero();
    for (const auto& p : ensemble.particles) mean += (p.weight / total) * to_eigen(p.theta);
    MatD cov = MatD::Zero();
    for (const auto& p : ensemble.particles) {
        const VecD d = to_eigen(p.theta) - mean;
        cov += (p.weight / total) * d * d.transpose();
    }
    s.covariance = cov;
    for (std::size_t i = 0; i < kDim; ++i) {
        s.mean[i] = mean[static_cast<Eigen::Index>(i)];
        s.std[i] = std::sqrt(std::max(cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), 0.0));
    }
    return s;
}

}  // namespace epicontrol
