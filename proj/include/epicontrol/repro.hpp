#pragma once

// Reproduction number as the spectral radius of the next-generation matrix
// K_L = -T Sigma^{-1} of the 25-dimensional infection subsystem
// (E, I_SC1, I_SC2, I_C1, I_C2) x 5 age groups.

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "epicontrol/seird.hpp"

namespace epicontrol {

inline constexpr int kInfectionDim = 25;
using InfectionMatrix = Eigen::Matrix<double, kInfectionDim, kInfectionDim>;

/// Block order along both axes: E, I_SC1, I_SC2, I_C1, I_C2; within a block, age groups 0..4.
struct InfectionSubsystemMatrices {
    InfectionMatrix transmission;  // T
    InfectionMatrix transition;    // Sigma
};

/// `susceptible` defaults to the census (S_i = N_i), which gives the basic reproduction number.
InfectionSubsystemMatrices build_infection_subsystem(const EpidemicParameters& params, const ContactMatrix& contacts,
                                                     const PopulationCensus& census,
                                                     const std::optional<AgeVector>& susceptible = std::nullopt);

/// K_L = -T Sigma^{-1}, computed by solving Sigma^T X = -T^T rather than inverting Sigma.
InfectionMatrix build_next_generation_matrix(const EpidemicParameters& params, const ContactMatrix& contacts,
                                             const PopulationCensus& census,
                                             const std::optional<AgeVector>& susceptible = std::nullopt);

struct PowerIterationResult {
    double radius = 0.0;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Power iteration for the dominant eigenvalue magnitude; does not fall back.
PowerIterationResult power_iteration(const Eigen::MatrixXd& m, double tolerance = 1e-10, int max_iterations = 10000);

/// |dominant eigenvalue|. Power iteration first, then a dense eigensolve when it does not converge.
double spectral_radius(const Eigen::MatrixXd& m);

double reproduction_number(const EpidemicParameters& params, const ContactMatrix& contacts,
                           const PopulationCensus& census, const std::optional<AgeVector>& susceptible = std::nullopt);

/// R for every day of [first_day, last_day]. `contacts_for_day` supplies the day's assembled matrix.
std::vector<double> r_trajectory(const EpidemicParameters& params, const PopulationCensus& census,
                                 const ContactSchedule& contacts_for_day, int first_day, int last_day);

/// Historical R(t): baseline contacts before lockdown, mobility-driven afterwards.
std::vector<double> r_trajectory(const EpidemicParameters& params, const ContactMatrixSet& base,
                                 const MobilitySeries& mobility, const PopulationCensus& census,
                                 int lockdown_start_day, int first_day, int last_day);

}  // namespace epicontrol
