#include "epicontrol/repro.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "epicontrol/error.hpp"

namespace epicontrol {

namespace {

enum Block : int { kE = 0, kSC1 = 1, kSC2 = 2, kC1 = 3, kC2 = 4 };

constexpr int idx(Block b, std::size_t group) { return static_cast<int>(b) * 5 + static_cast<int>(group); }

}  // namespace

InfectionSubsystemMatrices build_infection_subsystem(const EpidemicParameters& params, const ContactMatrix& contacts,
                                                     const PopulationCensus& census,
                                                     const std::optional<AgeVector>& susceptible) {
    census.validate();
    const AgeVector s = susceptible.value_or(census.population);
    InfectionSubsystemMatrices m;
    m.transmission.setZero();
    m.transition.setZero();

    for (std::size_t i = 0; i < kAgeGroups; ++i) {
        for (std::size_t j = 0; j < kAgeGroups; ++j) {
            const double scn = s[i] * contacts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) /
                               census.population[j];
            m.transmission(idx(kE, i), idx(kSC1, j)) = params.beta * scn;
            m.transmission(idx(kE, i), idx(kSC2, j)) = params.beta * scn;
        }
        const double kappa = params.kappa();
        const double gc = params.gamma_C();
        m.transition(idx(kE, i), idx(kE, i)) = -kappa;
        m.transition(idx(kSC1, i), idx(kE, i)) = params.rho[i] * kappa;
        m.transition(idx(kSC1, i), idx(kSC1, i)) = -gc;
        m.transition(idx(kSC2, i), idx(kE, i)) = (1.0 - params.rho[i]) * kappa;
        m.transition(idx(kSC2, i), idx(kSC2, i)) = -params.gamma_R();
        m.transition(idx(kC1, i), idx(kSC1, i)) = params.rho_prime[i] * gc;
        m.transition(idx(kC1, i), idx(kC1, i)) = -params.nu();
        m.transition(idx(kC2, i), idx(kSC1, i)) = (1.0 - params.rho_prime[i]) * gc;
        m.transition(idx(kC2, i), idx(kC2, i)) = -params.gamma_RC();
    }
    return m;
}

InfectionMatrix build_next_generation_matrix(const EpidemicParameters& params, const ContactMatrix& contacts,
                                             const PopulationCensus& census,
                                             const std::optional<AgeVector>& susceptible) {
    const auto m = build_infection_subsystem(params, contacts, census, susceptible);
    Eigen::PartialPivLU<InfectionMatrix> lu(m.transition.transpose());
    if (!(std::abs(lu.determinant()) > 0.0) || !std::isfinite(lu.determinant())) {
        throw NumericError("transition matrix Sigma is singular");
    }
    const InfectionMatrix x = lu.solve(-m.transmission.transpose());
    return x.transpose();
}

PowerIterationResult power_iteration(const Eigen::MatrixXd& m, double tolerance, int max_iterations) {
    if (m.rows() != m.cols()) throw StructuralError("spectral radius needs a square matrix");
    if (!m.allFinite()) throw ValidationError("matrix has non-finite entries");
    PowerIterationResult result;
    const Eigen::Index n = m.rows();
    if (n == 0) {
        result.converged = true;
        return result;
    }
    // Positive start vector: for non-negative matrices it has a component along the Perron vector.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) v(i) += 1e-3 * static_cast<double>(i + 1) / static_cast<double>(n);
    v.normalize();

    Eigen::VectorXd w(n);
    for (int it = 1; it <= max_iterations; ++it) {
        w.noalias() = m * v;
        const double norm = w.norm();
        result.iterations = it;
        if (norm == 0.0) {
            result.radius = 0.0;
            result.residual = 0.0;
            result.converged = true;
            return result;
        }
        const double rayleigh = v.dot(w);
        result.radius = std::abs(rayleigh);
        result.residual = (w - rayleigh * v).norm() / std::max(std::abs(rayleigh), 1e-300);
        if (result.residual < tolerance) {
            result.converged = true;
            return result;
        }
        v = w / norm;
    }
    return result;
}

double spectral_radius(const Eigen::MatrixXd& m) {
    const auto power = power_iteration(m);
    if (power.converged) return power.radius;

    Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "spectral radius did not converge after " << power.iterations << " iterations (residual "
            << power.residual << ") and the dense eigensolver failed";
        throw NumericError(msg.str());
    }
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double reproduction_number(const EpidemicParameters& params, const ContactMatrix& contacts,
                           const PopulationCensus& census, const std::optional<AgeVector>& susceptible) {
    return spectral_radius(build_next_generation_matrix(params, contacts, census, susceptible));
}

std::vector<double> r_trajectory(const EpidemicParameters& params, const PopulationCensus& census,
                                 const ContactSchedule& contacts_for_day, int first_day, int last_day) {
    if (first_day > last_day) throw ValidationError("empty day range for R trajectory");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(last_day - first_day + 1));
    for (int d = first_day; d <= last_day; ++d) out.push_back(reproduction_number(params, contacts_for_day(d), census));
    return out;
}

std::vector<double> r_trajectory(const EpidemicParameters& params, const ContactMatrixSet& base,
                                 const MobilitySeries& mobility, const PopulationCensus& census,
                                 int lockdown_start_day, int first_day, int last_day) {
    if (last_day >= lockdown_start_day) mobility.require_coverage(std::max(first_day, lockdown_start_day), last_day);
    return r_trajectory(
        params, census,
        [&](int day) { return historical_contacts(base, mobility, params, lockdown_start_day, day); }, first_day,
        last_day);
}

}  // namespace epicontrol
