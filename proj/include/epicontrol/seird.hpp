#pragma once

// Age-structured SEI4RD dynamics: contact-matrix assembly, right-hand side,
// RK4 integration and seeding of the initial state.

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "epicontrol/mobility_series.hpp"

namespace epicontrol {

inline constexpr std::size_t kAgeGroups = 5;

/// Age bands in model order: 0-19, 20-39, 40-59, 60-79, 80+. Group index 0 is the youngest.
inline constexpr std::array<std::string_view, kAgeGroups> kAgeBandLabels{"0-19", "20-39", "40-59", "60-79", "80+"};
inline constexpr std::array<int, kAgeGroups> kAgeBandLower{0, 20, 40, 60, 80};

using AgeVector = std::array<double, kAgeGroups>;
using ContactMatrix = Eigen::Matrix<double, 5, 5, Eigen::RowMajor>;

enum class Compartment : std::size_t { S, E, I_SC1, I_SC2, I_C1, I_C2, R, D };
inline constexpr std::size_t kCompartments = 8;
inline constexpr std::array<std::string_view, kCompartments> kCompartmentNames{"S",    "E",    "I_SC1", "I_SC2",
                                                                               "I_C1", "I_C2", "R",     "D"};

/// Person counts per compartment and age group. Real-valued (continuous approximation).
struct CompartmentState {
    std::array<AgeVector, kCompartments> values{};

    AgeVector& operator[](Compartment c) { return values[static_cast<std::size_t>(c)]; }
    const AgeVector& operator[](Compartment c) const { return values[static_cast<std::size_t>(c)]; }

    double* data() { return values[0].data(); }
    const double* data() const { return values[0].data(); }
    static constexpr std::size_t size() { return kCompartments * kAgeGroups; }

    AgeVector group_totals() const;
    double total() const;
    /// I^C_tot: clinical infected (I_C1 + I_C2) summed over age groups.
    double hospital_total() const;
    double min_entry() const;
};

struct EpidemicParameters {
    double beta = 0.13;
    double d_L = 1.57;
    double d_C = 2.12;
    double d_R = 1.54;
    double d_RC = 12.08;
    double d_D = 5.54;
    AgeVector rho{0.06, 0.05, 0.08, 0.54, 0.79};
    AgeVector rho_prime{0.26, 0.28, 0.33, 0.26, 0.80};
    double n_in = 276.0;
    double alpha_123 = 0.63;
    double alpha_4 = 0.57;
    double alpha_5 = 0.71;

    static constexpr std::size_t kCount = 20;
    using Vector = std::array<double, kCount>;

    /// Names in vector order (matches to_vector/from_vector).
    static const std::array<std::string, kCount>& names();
    Vector to_vector() const;
    static EpidemicParameters from_vector(const Vector& v);

    double kappa() const { return 1.0 / d_L; }
    double gamma_C() const { return 1.0 / d_C; }
    double gamma_R() const { return 1.0 / d_R; }
    double gamma_RC() const { return 1.0 / d_RC; }
    double nu() const { return 1.0 / d_D; }

    /// Throws ValidationError on non-positive durations or out-of-range probabilities.
    void validate() const;
};

struct ContactMatrixSet {
    ContactMatrix home = ContactMatrix::Zero();
    ContactMatrix work = ContactMatrix::Zero();
    ContactMatrix school = ContactMatrix::Zero();
    ContactMatrix other = ContactMatrix::Zero();

    /// Pre-lockdown matrix: plain sum of the four locations.
    ContactMatrix baseline() const { return home + work + school + other; }
    void validate() const;
};

/// Per-group contact scalers for each location category. alpha_home is fixed at 1.
struct AlphaMultipliers {
    AgeVector home{1, 1, 1, 1, 1};
    AgeVector work{1, 1, 1, 1, 1};
    AgeVector school{1, 1, 1, 1, 1};
    AgeVector other{1, 1, 1, 1, 1};

    void validate() const;
};

struct PopulationCensus {
    AgeVector population{};

    double total() const;
    void validate() const;
};

/// Row i of the result is scaled by group i's multipliers only.
ContactMatrix assemble_contact_matrix(const ContactMatrixSet& base, const AlphaMultipliers& alphas);

inline constexpr double kMobilityClampUpper = 1.5;
double clamp_mobility(double m);

/// Groups 0-2 follow alpha_123 * m; groups 3 and 4 use alpha_4 / alpha_5 in every category.
AlphaMultipliers alphas_from_mobility(const MobilityPoint& m, double alpha_123, double alpha_4, double alpha_5);
AlphaMultipliers alphas_from_mobility(const MobilityPoint& m, const EpidemicParameters& params);

/// Right-hand side of the SEI4RD system for a fixed contact matrix.
CompartmentState derivative(const CompartmentState& state, const EpidemicParameters& params, const ContactMatrix& contacts,
                            const PopulationCensus& census);

/// Contact matrix in force on a given (integer) day.
using ContactSchedule = std::function<ContactMatrix(int day)>;

struct DynamicsContext {
    EpidemicParameters params;
    PopulationCensus census;
    ContactSchedule contacts;
};

/// One classical RK4 step. The contact matrix is resolved once, for the day containing the
/// step midpoint, so a step that does not straddle a day boundary sees a single matrix.
CompartmentState rk4_step(const CompartmentState& state, double t, double dt, const DynamicsContext& ctx);

/// Fractions of N_in seeded into each age group.
inline constexpr AgeVector kSeedFractions{0.1, 0.4, 0.35, 0.1, 0.05};

CompartmentState initialize_state(const EpidemicParameters& params, const PopulationCensus& census);

/// States sampled at integer days. daily_deaths[k] = D(day k) - D(day k-1); entry 0 is zero.
struct Trajectory {
    int start_day = 0;
    std::vector<CompartmentState> states;
    std::vector<AgeVector> daily_deaths;
    std::vector<double> hospital_total;

    int end_day() const { return start_day + static_cast<int>(states.size()) - 1; }
    const CompartmentState& state_at(int day) const;
    const AgeVector& deaths_on(int day) const;
    double hospital_on(int day) const;
};

inline constexpr double kDefaultDt = 0.1;

/// Integrates `n_days` whole days from `initial` at `start_day`. 1/dt must be an integer.
Trajectory integrate_days(const CompartmentState& initial, int start_day, int n_days, const DynamicsContext& ctx,
                          double dt = kDefaultDt);

/// Contact matrix for day `day`: baseline before `lockdown_start_day`, mobility-driven afterwards.
ContactMatrix historical_contacts(const ContactMatrixSet& base, const MobilitySeries& mobility,
                                  const EpidemicParameters& params, int lockdown_start_day, int day);

/// Seeds at start_day and integrates to end_day using the historical mobility after lockdown.
Trajectory simulate(const EpidemicParameters& params, const MobilitySeries& mobility, const PopulationCensus& census,
                    const ContactMatrixSet& contacts, int start_day, int end_day, int lockdown_start_day,
                    double dt = kDefaultDt);

/// Everything besides the parameters that a historical simulation needs.
struct ModelSetup {
    ContactMatrixSet contacts;
    PopulationCensus census;
    MobilitySeries mobility;
    int lockdown_start_day = 17;
    double dt = kDefaultDt;

    ContactMatrix contacts_on(const EpidemicParameters& params, int day) const {
        return historical_contacts(contacts, mobility, params, lockdown_start_day, day);
    }
    /// Seeded run from day 0 to end_day.
    Trajectory simulate(const EpidemicParameters& params, int end_day) const {
        return epicontrol::simulate(params, mobility, census, contacts, 0, end_day, lockdown_start_day, dt);
    }
};

}  // namespace epicontrol
