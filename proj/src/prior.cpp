#include "epicontrol/prior.hpp"

#include <cmath>
#include <limits>

#include "epicontrol/error.hpp"

namespace epicontrol {

std::string to_string(PriorFamily family) {
    switch (family) {
        case PriorFamily::Uniform: return "uniform";
        case PriorFamily::LogUniform: return "log-uniform";
        case PriorFamily::TruncatedNormal: return "truncated-normal";
    }
    return "uniform";
}

PriorFamily prior_family_from_string(const std::string& name) {
    if (name == "uniform") return PriorFamily::Uniform;
    if (name == "log-uniform") return PriorFamily::LogUniform;
    if (name == "truncated-normal") return PriorFamily::TruncatedNormal;
    throw ValidationError("unknown prior family '" + name + "'");
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

double ParameterPrior::sample(Rng& rng) const {
    switch (family) {
        case PriorFamily::Uniform: return std::uniform_real_distribution<double>(lower, upper)(rng);
        case PriorFamily::LogUniform:
            return std::exp(std::uniform_real_distribution<double>(std::log(lower), std::log(upper))(rng));
        case PriorFamily::TruncatedNormal: {
            // Inverse-CDF sampling keeps the draw count per sample fixed at one uniform.
            const double a = normal_cdf((lower - mean) / sd);
            const double b = normal_cdf((upper - mean) / sd);
            const double u = std::uniform_real_distribution<double>(a, b)(rng);
            // Bisection on the CDF: robust and plenty fast for a handful of draws per particle.
            double lo = lower;
            double hi = upper;
            for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(hi)); ++it) {
                const double mid = 0.5 * (lo + hi);
                (normal_cdf((mid - mean) / sd) < u ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    return lower;
}

double ParameterPrior::log_density(double x) const {
    if (!in_support(x)) return -std::numeric_limits<double>::infinity();
    switch (family) {
        case PriorFamily::Uniform: return -std::log(upper - lower);
        case PriorFamily::LogUniform: return -std::log(x) - std::log(std::log(upper) - std::log(lower));
        case PriorFamily::TruncatedNormal: {
            const double z = (x - mean) / sd;
            const double mass = normal_cdf((upper - mean) / sd) - normal_cdf((lower - mean) / sd);
            return -0.5 * z * z - std::log(sd * std::sqrt(2.0 * M_PI)) - std::log(mass);
        }
    }
    return 0.0;
}

void ParameterPrior::validate() const {
    if (!(lower < upper) || !std::isfinite(lower) || !std::isfinite(upper)) {
        throw ValidationError("prior for " + name + " needs finite bounds with lower < upper");
    }
    if (family == PriorFamily::LogUniform && !(lower > 0.0)) {
        throw ValidationError("log-uniform prior for " + name + " needs a positive lower bound");
    }
    if (family == PriorFamily::TruncatedNormal && !(sd > 0.0)) {
        throw ValidationError("truncated-normal prior for " + name + " needs sd > 0");
    }
}

PriorSpecification PriorSpecification::defaults() {
    PriorSpecification spec;
    const auto& names = EpidemicParameters::names();
    auto set = [&](std::size_t i, double lo, double hi) { spec.marginals[i] = {names[i], PriorFamily::Uniform, lo, hi, 0.0, 1.0}; };
    set(0, 0.01, 0.5);
    set(1, 1.0, 16.0);
    set(2, 1.0, 16.0);
    set(3, 1.0, 16.0);
    set(4, 1.0, 20.0);
    set(5, 1.0, 20.0);
    for (std::size_t i = 6; i < 16; ++i) set(i, 0.0, 1.0);
    set(16, 50.0, 600.0);
    for (std::size_t i = 17; i < 20; ++i) set(i, 0.0, 1.0);
    return spec;
}

EpidemicParameters::Vector PriorSpecification::sample(Rng& rng) const {
    EpidemicParameters::Vector v{};
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = marginals[i].sample(rng);
    return v;
}

bool PriorSpecification::in_support(const EpidemicParameters::Vector& v) const {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!marginals[i].in_support(v[i])) return false;
    }
    return true;
}

double PriorSpecification::log_density(const EpidemicParameters::Vector& v) const {
    double lp = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) lp += marginals[i].log_density(v[i]);
    return lp;
}

void PriorSpecification::validate() const {
    const auto& names = EpidemicParameters::names();
    for (std::size_t i = 0; i < marginals.size(); ++i) {
        const auto& m = marginals[i];
        if (m.name != names[i]) {
            throw ValidationError("prior entry " + std::to_string(i) + " is '" + m.name + "', expected '" + names[i] + "'");
        }
        m.validate();
        const bool duration = i >= 1 && i <= 5;
        if (duration && !(m.lower > 0.0)) throw ValidationError("duration prior " + m.name + " must exclude 0");
        if (!duration && i != 16 && (m.lower < 0.0 || m.upper > 1.0)) {
            throw ValidationError("prior " + m.name + " must stay within [0, 1]");
        }
        if (i == 16 && m.lower < 0.0) throw ValidationError("N_in prior must be non-negative");
    }
}

}  // namespace epicontrol
