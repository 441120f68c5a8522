#pragma once

#include <array>
#include <string>

#include "epicontrol/rng.hpp"
#include "epicontrol/seird.hpp"

namespace epicontrol {

enum class PriorFamily { Uniform, LogUniform, TruncatedNormal };

std::string to_string(PriorFamily family);
PriorFamily prior_family_from_string(const std::string& name);

/// Marginal prior of one parameter. Support is always [lower, upper]; TruncatedNormal also
/// uses mean/sd of the untruncated normal.
struct ParameterPrior {
    std::string name;
    PriorFamily family = PriorFamily::Uniform;
    double lower = 0.0;
    double upper = 1.0;
    double mean = 0.0;
    double sd = 1.0;

    bool in_support(double x) const { return x >= lower && x <= upper; }
    double sample(Rng& rng) const;
    /// Log density up to the family's normalising constant being exact (includes truncation mass).
    double log_density(double x) const;
    void validate() const;
};

/// Independent priors over all EpidemicParameters entries, in EpidemicParameters::names() order.
struct PriorSpecification {
    std::array<ParameterPrior, EpidemicParameters::kCount> marginals;

    /// Uniform boxes: beta [0.01, 0.5]; d_L, d_C, d_R [1, 16]; d_RC, d_D [1, 20]; rho, rho' [0, 1];
    /// N_in [50, 600]; alpha_* [0, 1].
    static PriorSpecification defaults();

    EpidemicParameters::Vector sample(Rng& rng) const;
    bool in_support(const EpidemicParameters::Vector& v) const;
    double log_density(const EpidemicParameters::Vector& v) const;
    /// Names must match the parameter order and bounds must respect the parameter invariants.
    void validate() const;
};

}  // namespace epicontrol
