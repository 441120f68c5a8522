#pragma once

// Bounded global minimisation by generalized simulated annealing (dual annealing),
// followed by a coordinate-descent polish of the best point.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace epicontrol {

using Objective = std::function<double(const std::vector<double>&)>;

struct AnnealConfig {
    /// Total objective evaluations, annealing and refinement included. Must be >= 1.
    std::size_t budget = 2000;
    std::uint64_t seed = 0;
    /// Share of the budget kept for the terminal coordinate descent.
    double refine_fraction = 0.2;
    double initial_temp = 5230.0;
    double restart_temp_ratio = 2e-5;
    double visit = 2.62;
    double accept = -5.0;

    void validate() const;
};

struct AnnealResult {
    std::vector<double> x;
    double cost = 0.0;
    std::vector<double> initial_x;
    double initial_cost = 0.0;
    std::size_t evaluations = 0;
};

/// Minimises `f` over the box [lower, upper]. The start point is x0 when given (clipped to the
/// box), otherwise uniform in the box. The returned cost never exceeds the start point's cost.
AnnealResult dual_annealing(const Objective& f, const std::vector<double>& lower, const std::vector<double>& upper,
                            const AnnealConfig& config, const std::optional<std::vector<double>>& x0 = std::nullopt);

}  // namespace epicontrol
