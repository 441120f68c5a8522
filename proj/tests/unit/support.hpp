#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <Eigen/Dense>

#include "epicontrol/seird.hpp"

namespace testing {

inline const std::filesystem::path kSource = EPICONTROL_SOURCE_DIR;
inline const std::filesystem::path kFixtures = kSource / "tests/fixtures";

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("epicontrol-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline epicontrol::ContactMatrixSet toy_contacts() {
    epicontrol::ContactMatrixSet c;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            c.home(i, j) = 0.5 + 0.1 * ((i + 2 * j) % 3);
            c.work(i, j) = (i >= 1 && i <= 3 && j >= 1 && j <= 3) ? 1.2 + 0.1 * i : 0.1;
            c.school(i, j) = (i == 0 && j == 0) ? 4.0 : 0.05 * (i + 1);
            c.other(i, j) = 0.6 + 0.05 * std::abs(i - j);
        }
    return c;
}

inline epicontrol::PopulationCensus toy_census() { return {{1.2e7, 1.4e7, 1.45e7, 1.1e7, 3e6}}; }

// Right-hand side written directly from the model equations, used as an oracle.
inline epicontrol::CompartmentState reference_derivative(const epicontrol::CompartmentState& s,
                                                         const epicontrol::EpidemicParameters& p,
                                                         const epicontrol::ContactMatrix& C,
                                                         const epicontrol::PopulationCensus& N) {
    using epicontrol::Compartment;
    epicontrol::CompartmentState d;
    const double kappa = 1 / p.d_L, gC = 1 / p.d_C, gR = 1 / p.d_R, gRC = 1 / p.d_RC, nu = 1 / p.d_D;
    for (int i = 0; i < 5; ++i) {
        double force = 0;
        for (int j = 0; j < 5; ++j)
            force += C(i, j) * (s[Compartment::I_SC1][j] + s[Compartment::I_SC2][j]) / N.population[j];
        const double inf = p.beta * s[Compartment::S][i] * force;
        const double E = s[Compartment::E][i], sc1 = s[Compartment::I_SC1][i], sc2 = s[Compartment::I_SC2][i];
        const double c1 = s[Compartment::I_C1][i], c2 = s[Compartment::I_C2][i];
        d[Compartment::S][i] = -inf;
        d[Compartment::E][i] = inf - kappa * E;
        d[Compartment::I_SC1][i] = p.rho[i] * kappa * E - gC * sc1;
        d[Compartment::I_SC2][i] = (1 - p.rho[i]) * kappa * E - gR * sc2;
        d[Compartment::I_C1][i] = p.rho_prime[i] * gC * sc1 - nu * c1;
        d[Compartment::I_C2][i] = (1 - p.rho_prime[i]) * gC * sc1 - gRC * c2;
        d[Compartment::R][i] = gRC * c2 + gR * sc2;
        d[Compartment::D][i] = nu * c1;
    }
    return d;
}

// Classical RK4 over whole days with a fixed matrix per day, independent of the library stepper.
inline epicontrol::CompartmentState reference_integrate(epicontrol::CompartmentState s,
                                                        const epicontrol::EpidemicParameters& p,
                                                        const epicontrol::ContactMatrix& C,
                                                        const epicontrol::PopulationCensus& N, int days, int steps) {
    const double h = 1.0 / steps;
    auto axpy = [](const epicontrol::CompartmentState& a, const epicontrol::CompartmentState& b, double k) {
        epicontrol::CompartmentState r;
        for (std::size_t n = 0; n < epicontrol::CompartmentState::size(); ++n) r.data()[n] = a.data()[n] + k * b.data()[n];
        return r;
    };
    for (int k = 0; k < days * steps; ++k) {
        const auto k1 = reference_derivative(s, p, C, N);
        const auto k2 = reference_derivative(axpy(s, k1, h / 2), p, C, N);
        const auto k3 = reference_derivative(axpy(s, k2, h / 2), p, C, N);
        const auto k4 = reference_derivative(axpy(s, k3, h), p, C, N);
        for (std::size_t n = 0; n < epicontrol::CompartmentState::size(); ++n)
            s.data()[n] += h / 6 * (k1.data()[n] + 2 * k2.data()[n] + 2 * k3.data()[n] + k4.data()[n]);
    }
    return s;
}

// R from an explicitly inverted transition matrix and a dense eigensolve.
inline double reference_r(const epicontrol::EpidemicParameters& p, const epicontrol::ContactMatrix& C,
                          const epicontrol::PopulationCensus& N) {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(25, 25), S = Eigen::MatrixXd::Zero(25, 25);
    const double kappa = 1 / p.d_L, gC = 1 / p.d_C, gR = 1 / p.d_R, gRC = 1 / p.d_RC, nu = 1 / p.d_D;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            T(i, 5 + j) = p.beta * C(i, j) * N.population[i] / N.population[j];
            T(i, 10 + j) = p.beta * C(i, j) * N.population[i] / N.population[j];
        }
        S(i, i) = -kappa;
        S(5 + i, i) = p.rho[i] * kappa;
        S(5 + i, 5 + i) = -gC;
        S(10 + i, i) = (1 - p.rho[i]) * kappa;
        S(10 + i, 10 + i) = -gR;
        S(15 + i, 5 + i) = p.rho_prime[i] * gC;
        S(15 + i, 15 + i) = -nu;
        S(20 + i, 5 + i) = (1 - p.rho_prime[i]) * gC;
        S(20 + i, 20 + i) = -gRC;
    }
    const Eigen::MatrixXd K = -T * S.inverse();
    return Eigen::EigenSolver<Eigen::MatrixXd>(K, false).eigenvalues().cwiseAbs().maxCoeff();
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace testing
