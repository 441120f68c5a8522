#include "epicontrol/anneal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "epicontrol/error.hpp"
#include "epicontrol/rng.hpp"

namespace epicontrol {

void AnnealConfig::validate() const {
    if (budget < 1) throw ValidationError("annealing budget must be >= 1");
    if (!(refine_fraction >= 0.0 && refine_fraction < 1.0)) throw ValidationError("refine fraction must lie in [0, 1)");
    if (!(visit > 1.0 && visit < 3.0)) throw ValidationError("visiting parameter must lie in (1, 3)");
    if (!(accept < 0.0)) throw ValidationError("acceptance parameter must be negative");
    if (!(initial_temp > 0.0)) throw ValidationError("initial temperature must be positive");
}

namespace {

constexpr double kTailLimit = 1e8;
constexpr double kMinVisitBound = 1e-10;

class Budget {
public:
    Budget(const Objective& f, std::size_t limit) : f_(f), limit_(limit) {}
    bool exhausted() const { return used_ >= limit_; }
    std::size_t used() const { return used_; }
    double operator()(const std::vector<double>& x) {
        ++used_;
        const double v = f_(x);
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    }
    void extend(std::size_t limit) { limit_ = limit; }

private:
    const Objective& f_;
    std::size_t limit_;
    std::size_t used_ = 0;
};

// Distorted Cauchy-Lorentz visiting distribution of generalized simulated annealing.
class Visitor {
public:
    Visitor(double qv, Rng& rng) : qv_(qv), rng_(rng) {
        factor2_ = std::exp((4.0 - qv) * std::log(qv - 1.0));
        factor3_ = std::exp((2.0 - qv) * std::log(2.0) / (qv - 1.0));
        factor4_ = std::sqrt(std::numbers::pi) * factor2_ / (factor3_ * (3.0 - qv));
        factor5_ = 1.0 / (qv - 1.0) - 0.5;
        const double d1 = 2.0 - factor5_;
        factor6_ = std::numbers::pi * (1.0 - factor5_) / std::sin(std::numbers::pi * (1.0 - factor5_)) /
                   std::exp(std::lgamma(d1));
    }

    double draw(double temperature) {
        const double factor1 = std::exp(std::log(temperature) / (qv_ - 1.0));
        const double sigmax = std::exp(-(qv_ - 1.0) * std::log(factor6_ / (factor4_ * factor1)) / (3.0 - qv_));
        const double x = sigmax * normal_(rng_);
        const double y = normal_(rng_);
        const double den = std::exp((qv_ - 1.0) * std::log(std::abs(y)) / (3.0 - qv_));
        double v = x / den;
        if (v > kTailLimit || !std::isfinite(v)) v = kTailLimit * uniform_(rng_);
        if (v < -kTailLimit) v = -kTailLimit * uniform_(rng_);
        return v;
    }

private:
    double qv_;
    Rng& rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    double factor2_, factor3_, factor4_, factor5_, factor6_;
};

double wrap(double v, double lo, double hi) {
    const double range = hi - lo;
    if (range <= 0.0) return lo;
    const double a = v - lo;
    const double b = std::fmod(a, range) + range;
    double x = std::fmod(b, range) + lo;
    if (std::abs(x - lo) < kMinVisitBound) x += kMinVisitBound;
    return std::clamp(x, lo, hi);
}

void coordinate_descent(Budget& eval, const std::vector<double>& lower, const std::vector<double>& upper,
                        std::vector<double>& best, double& best_cost) {
    const std::size_t dim = best.size();
    std::vector<double> step(dim);
    for (std::size_t i = 0; i < dim; ++i) step[i] = 0.1 * (upper[i] - lower[i]);
    const double min_scale = 1e-7;
    while (!eval.exhausted()) {
        bool any_active = false;
        for (std::size_t i = 0; i < dim && !eval.exhausted(); ++i) {
            if (step[i] <= min_scale * (upper[i] - lower[i])) continue;
            any_active = true;
            bool moved = false;
            for (double dir : {1.0, -1.0}) {
                if (eval.exhausted()) break;
                std::vector<double> trial = best;
                trial[i] = std::clamp(best[i] + dir * step[i], lower[i], upper[i]);
                if (trial[i] == best[i]) continue;
                const double c = eval(trial);
                if (c < best_cost) {
                    best = std::move(trial);
                    best_cost = c;
                    moved = true;
                    break;
                }
            }
            if (!moved) step[i] *= 0.5;
        }
        if (!any_active) break;
    }
}

}  // namespace

AnnealResult dual_annealing(const Objective& f, const std::vector<double>& lower, const std::vector<double>& upper,
                            const AnnealConfig& config, const std::optional<std::vector<double>>& x0) {
    config.validate();
    const std::size_t dim = lower.size();
    if (dim == 0 || upper.size() != dim) throw ValidationError("bounds must be non-empty and of equal length");
    for (std::size_t i = 0; i < dim; ++i) {
        if (!(lower[i] <= upper[i])) throw ValidationError("lower bound exceeds upper bound at index " + std::to_string(i));
    }
    Rng rng = make_rng(config.seed, 0xA77EA1ULL);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto random_point = [&] {
        std::vector<double> x(dim);
        for (std::size_t i = 0; i < dim; ++i) x[i] = lower[i] + u01(rng) * (upper[i] - lower[i]);
        return x;
    };

    const auto refine_budget = static_cast<std::size_t>(std::floor(config.refine_fraction * static_cast<double>(config.budget)));
    Budget eval(f, config.budget - refine_budget);

    AnnealResult result;
    std::vector<double> current = x0 ? *x0 : random_point();
    if (current.size() != dim) throw ValidationError("start point has the wrong dimension");
    for (std::size_t i = 0; i < dim; ++i) current[i] = std::clamp(current[i], lower[i], upper[i]);
    double current_cost = eval(current);
    result.initial_x = current;
    result.initial_cost = current_cost;
    std::vector<double> best = current;
    double best_cost = current_cost;

    Visitor visitor(config.visit, rng);
    const double qv = config.visit;
    const double qa = config.accept;
    const double t1 = std::exp((qv - 1.0) * std::log(2.0)) - 1.0;
    std::size_t iteration = 0;
    while (!eval.exhausted()) {
        const double t2 = std::exp((qv - 1.0) * std::log(static_cast<double>(iteration) + 2.0)) - 1.0;
        const double temperature = config.initial_temp * t1 / t2;
        if (temperature < config.initial_temp * config.restart_temp_ratio) {
            iteration = 0;
            current = random_point();
            current_cost = eval(current);
            if (current_cost < best_cost) {
                best = current;
                best_cost = current_cost;
            }
            continue;
        }
        const double step_temp = temperature / static_cast<double>(iteration + 1);
        for (std::size_t j = 0; j < 2 * dim && !eval.exhausted(); ++j) {
            std::vector<double> candidate = current;
            if (j < dim) {
                for (std::size_t i = 0; i < dim; ++i) candidate[i] = wrap(current[i] + visitor.draw(temperature), lower[i], upper[i]);
            } else {
                const std::size_t i = j - dim;
                candidate[i] = wrap(current[i] + visitor.draw(temperature), lower[i], upper[i]);
            }
            const double cost = eval(candidate);
            bool accept = cost < current_cost;
            if (!accept) {
                const double r = u01(rng);
                const double pqv_temp = 1.0 - (1.0 - qa) * (cost - current_cost) / step_temp;
                const double pqv = pqv_temp <= 0.0 ? 0.0 : std::exp(std::log(pqv_temp) / (1.0 - qa));
                accept = r <= pqv;
            }
            if (accept) {
                current = std::move(candidate);
                current_cost = cost;
                if (current_cost < best_cost) {
                    best = current;
                    best_cost = current_cost;
                }
            }
        }
        ++iteration;
    }

    eval.extend(config.budget);
    coordinate_descent(eval, lower, upper, best, best_cost);
    result.x = std::move(best);
    result.cost = best_cost;
    result.evaluations = eval.used();
    return result;
}

}  // namespace epicontrol
