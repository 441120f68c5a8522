#include "epicontrol/seird.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "epicontrol/error.hpp"

namespace epicontrol {

// ---------------------------------------------------------------------------
// MobilitySeries

MobilitySeries::MobilitySeries(int first_day, std::vector<MobilityPoint> values)
    : first_day_(first_day), values_(std::move(values)) {}

const MobilityPoint& MobilitySeries::at(int day) const {
    if (!covers(day)) {
        throw ValidationError("mobility series has no value for day " + std::to_string(day));
    }
    return values_[static_cast<std::size_t>(day - first_day_)];
}

void MobilitySeries::require_coverage(int from, int to) const {
    std::vector<int> missing;
    for (int d = from; d <= to; ++d) {
        if (!covers(d)) missing.push_back(d);
    }
    if (missing.empty()) return;
    std::ostringstream msg;
    msg << "mobility series is missing " << missing.size() << " day(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg << ' ' << missing[i];
    if (missing.size() > 20) msg << " ...";
    throw ValidationError(msg.str());
}

MobilitySeries MobilitySeries::slice(int from, int to) const {
    const int lo = std::max(from, first_day_);
    const int hi = std::min(to, last_day());
    if (lo > hi) return MobilitySeries(lo, {});
    std::vector<MobilityPoint> out(values_.begin() + (lo - first_day_), values_.begin() + (hi - first_day_ + 1));
    return MobilitySeries(lo, std::move(out));
}

// ---------------------------------------------------------------------------
// CompartmentState

AgeVector CompartmentState::group_totals() const {
    AgeVector totals{};
    for (const auto& compartment : values) {
        for (std::size_t g = 0; g < kAgeGroups; ++g) totals[g] += compartment[g];
    }
    return totals;
}

double CompartmentState::total() const {
    const auto t = group_totals();
    return std::accumulate(t.begin(), t.end(), 0.0);
}

double CompartmentState::hospital_total() const {
    double sum = 0.0;
    for (std::size_t g = 0; g < kAgeGroups; ++g) sum += (*this)[Compartment::I_C1][g] + (*this)[Compartment::I_C2][g];
    return sum;
}

double CompartmentState::min_entry() const { return *std::min_element(data(), data() + size()); }

// ---------------------------------------------------------------------------
// Parameters

const std::array<std::string, EpidemicParameters::kCount>& EpidemicParameters::names() {
    static const std::array<std::string, kCount> kNames{
        "beta",         "d_L",          "d_C",          "d_R",          "d_RC",         "d_D",        "rho_1",
        "rho_2",        "rho_3",        "rho_4",        "rho_5",        "rho_prime_1",  "rho_prime_2", "rho_prime_3",
        "rho_prime_4",  "rho_prime_5",  "N_in",         "alpha_123",    "alpha_4",      "alpha_5"};
    return kNames;
}

EpidemicParameters::Vector EpidemicParameters::to_vector() const {
    Vector v{};
    v[0] = beta;
    v[1] = d_L;
    v[2] = d_C;
    v[3] = d_R;
    v[4] = d_RC;
    v[5] = d_D;
    for (std::size_t g = 0; g < kAgeGroups; ++g) {
        v[6 + g] = rho[g];
        v[11 + g] = rho_prime[g];
    }
    v[16] = n_in;
    v[17] = alpha_123;
    v[18] = alpha_4;
    v[19] = alpha_5;
    return v;
}

EpidemicParameters EpidemicParameters::from_vector(const Vector& v) {
    EpidemicParameters p;
    p.beta = v[0];
    p.d_L = v[1];
    p.d_C = v[2];
    p.d_R = v[3];
    p.d_RC = v[4];
    p.d_D = v[5];
    for (std::size_t g = 0; g < kAgeGroups; ++g) {
        p.rho[g] = v[6 + g];
        p.rho_prime[g] = v[11 + g];
    }
    p.n_in = v[16];
    p.alpha_123 = v[17];
    p.alpha_4 = v[18];
    p.alpha_5 = v[19];
    return p;
}

namespace {

void require_unit(double x, const std::string& name) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw ValidationError(name + " must lie in [0, 1], got " + std::to_string(x));
    }
}

}  // namespace

void EpidemicParameters::validate() const {
    const auto v = to_vector();
    const auto& n = names();
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be a finite probability");
    require_unit(beta, "beta");
    for (std::size_t i = 1; i <= 5; ++i) {
        if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
            throw ValidationError(n[i] + " must be a positive duration, got " + std::to_string(v[i]));
        }
    }
    for (std::size_t i = 6; i < 16; ++i) require_unit(v[i], n[i]);
    if (!(n_in >= 0.0) || !std::isfinite(n_in)) throw ValidationError("N_in must be >= 0");
    require_unit(alpha_123, "alpha_123");
    require_unit(alpha_4, "alpha_4");
    require_unit(alpha_5, "alpha_5");
}

void ContactMatrixSet::validate() const {
    const std::array<std::pair<const ContactMatrix*, const char*>, 4> blocks{
        {{&home, "home"}, {&work, "work"}, {&school, "school"}, {&other, "other"}}};
    for (const auto& [m, name] : blocks) {
        if (!m->allFinite() || (m->array() < 0.0).any()) {
            throw ValidationError(std::string("contact matrix '") + name + "' has negative or non-finite entries");
        }
    }
}

void AlphaMultipliers::validate() const {
    for (std::size_t g = 0; g < kAgeGroups; ++g) {
        if (home[g] != 1.0) throw ValidationError("alpha_home must be 1 for every group");
        for (double a : {work[g], school[g], other[g]}) {
            if (!(a >= 0.0 && a <= kMobilityClampUpper)) {
                throw ValidationError("alpha multiplier out of range: " + std::to_string(a));
            }
        }
    }
}

double PopulationCensus::total() const { return std::accumulate(population.begin(), population.end(), 0.0); }

void PopulationCensus::validate() const {
    for (std::size_t g = 0; g < kAgeGroups; ++g) {
        if (!(population[g] > 0.0) || !std::isfinite(population[g])) {
            throw StructuralError("census population for group " + std::string(kAgeBandLabels[g]) +
                                  " must be positive");
        }
    }
}

// ---------------------------------------------------------------------------
// Contacts

ContactMatrix assemble_contact_matrix(const ContactMatrixSet& base, const AlphaMultipliers& alphas) {
    ContactMatrix c;
    for (Eigen::Index i = 0; i < 5; ++i) {
        const auto g = static_cast<std::size_t>(i);
        c.row(i) = alphas.home[g] * base.home.row(i) + alphas.work[g] * base.work.row(i) +
                   alphas.school[g] * base.school.row(i) + alphas.other[g] * base.other.row(i);
    }
    return c;
}

double clamp_mobility(double m) { return std::clamp(m, 0.0, kMobilityClampUpper); }

AlphaMultipliers alphas_from_mobility(const MobilityPoint& m, double alpha_123, double alpha_4, double alpha_5) {
    AlphaMultipliers a;
    const double school = clamp_mobility(m.school);
    const double work = clamp_mobility(m.work);
    const double other = clamp_mobility(m.other);
    for (std::size_t g = 0; g < 3; ++g) {
        a.school[g] = alpha_123 * school;
        a.work[g] = alpha_123 * work;
        a.other[g] = alpha_123 * other;
    }
    a.school[3] = a.work[3] = a.other[3] = alpha_4;
    a.school[4] = a.work[4] = a.other[4] = alpha_5;
    return a;
}

AlphaMultipliers alphas_from_mobility(const MobilityPoint& m, const EpidemicParameters& params) {
    return alphas_from_mobility(m, params.alpha_123, params.alpha_4, params.alpha_5);
}

// ---------------------------------------------------------------------------
// Right-hand side

namespace {

/// beta * C_ij / N_j, the per-capita force-of-infection kernel.
using TransmissionKernel = ContactMatrix;

TransmissionKernel transmission_kernel(const EpidemicParameters& params, const ContactMatrix& contacts,
                                       const PopulationCensus& census) {
    TransmissionKernel k;
    for (Eigen::Index j = 0; j < 5; ++j) {
        const double n = census.population[static_cast<std::size_t>(j)];
        if (!(n > 0.0)) throw StructuralError("census population must be positive in every age group");
        k.col(j) = params.beta * contacts.col(j) / n;
    }
    return k;
}

struct Rates {
    double kappa, gamma_c, gamma_r, gamma_rc, nu;
    AgeVector rho, rho_prime;

    explicit Rates(const EpidemicParameters& p)
        : kappa(p.kappa()), gamma_c(p.gamma_C()), gamma_r(p.gamma_R()), gamma_rc(p.gamma_RC()), nu(p.nu()),
          rho(p.rho), rho_prime(p.rho_prime) {}
};

void rhs(const double* y, double* dy, const TransmissionKernel& kernel, const Rates& r) {
    constexpr std::size_t n = kAgeGroups;
    const double* S = y;
    const double* E = y + n;
    const double* SC1 = y + 2 * n;
    const double* SC2 = y + 3 * n;
    const double* C1 = y + 4 * n;
    const double* C2 = y + 5 * n;

    double isc[n];
    for (std::size_t j = 0; j < n; ++j) isc[j] = SC1[j] + SC2[j];

    for (std::size_t i = 0; i < n; ++i) {
        double foi = 0.0;
        for (std::size_t j = 0; j < n; ++j) foi += kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * isc[j];
        const double infections = S[i] * foi;
        const double incubated = r.kappa * E[i];
        const double to_clinical = r.gamma_c * SC1[i];
        const double deaths = r.nu * C1[i];
        const double sc_recoveries = r.gamma_r * SC2[i];
        const double c_recoveries = r.gamma_rc * C2[i];

        dy[i] = -infections;
        dy[n + i] = infections - incubated;
        dy[2 * n + i] = r.rho[i] * incubated - to_clinical;
        dy[3 * n + i] = (1.0 - r.rho[i]) * incubated - sc_recoveries;
        dy[4 * n + i] = r.rho_prime[i] * to_clinical - deaths;
        dy[5 * n + i] = (1.0 - r.rho_prime[i]) * to_clinical - c_recoveries;
        dy[6 * n + i] = c_recoveries + sc_recoveries;
        dy[7 * n + i] = deaths;
    }
}

void rk4_inplace(CompartmentState& state, double dt, const TransmissionKernel& kernel, const Rates& rates) {
    constexpr std::size_t m = CompartmentState::size();
    double k1[m], k2[m], k3[m], k4[m], tmp[m];
    double* y = state.data();

    rhs(y, k1, kernel, rates);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
    rhs(tmp, k2, kernel, rates);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
    rhs(tmp, k3, kernel, rates);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + dt * k3[i];
    rhs(tmp, k4, kernel, rates);
    for (std::size_t i = 0; i < m; ++i) y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

int steps_per_day(double dt) {
    if (!(dt > 0.0)) throw ValidationError("dt must be positive");
    const double inv = 1.0 / dt;
    const long rounded = std::lround(inv);
    if (rounded < 1 || std::abs(inv - static_cast<double>(rounded)) > 1e-9 * inv) {
        throw ValidationError("1/dt must be an integer so steps align with day boundaries");
    }
    return static_cast<int>(rounded);
}

}  // namespace

CompartmentState derivative(const CompartmentState& state, const EpidemicParameters& params, const ContactMatrix& contacts,
                            const PopulationCensus& census) {
    const auto kernel = transmission_kernel(params, contacts, census);
    CompartmentState out;
    rhs(state.data(), out.data(), kernel, Rates(params));
    return out;
}

CompartmentState rk4_step(const CompartmentState& state, double t, double dt, const DynamicsContext& ctx) {
    if (!(dt > 0.0)) throw ValidationError("dt must be positive");
    const int day = static_cast<int>(std::floor(t + 0.5 * dt));
    const auto kernel = transmission_kernel(ctx.params, ctx.contacts(day), ctx.census);
    CompartmentState next = state;
    rk4_inplace(next, dt, kernel, Rates(ctx.params));
    return next;
}

// ---------------------------------------------------------------------------
// Initial state

CompartmentState initialize_state(const EpidemicParameters& params, const PopulationCensus& census) {
    census.validate();
    if (!(params.n_in >= 0.0)) throw ValidationError("N_in must be >= 0");
    CompartmentState s;
    for (std::size_t g = 0; g < kAgeGroups; ++g) {
        const double seeded = params.n_in * kSeedFractions[g];
        s[Compartment::E][g] = seeded / 3.0;
        s[Compartment::I_SC1][g] = params.rho[g] * seeded * 2.0 / 3.0;
        s[Compartment::I_SC2][g] = (1.0 - params.rho[g]) * seeded * 2.0 / 3.0;
        s[Compartment::S][g] = census.population[g] - seeded;
        if (s[Compartment::S][g] < 0.0) {
            throw ValidationError("N_in seeds more people than group " + std::string(kAgeBandLabels[g]) + " contains");
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Trajectories

const CompartmentState& Trajectory::state_at(int day) const {
    if (day < start_day || day > end_day()) throw ValidationError("trajectory has no state for day " + std::to_string(day));
    return states[static_cast<std::size_t>(day - start_day)];
}

const AgeVector& Trajectory::deaths_on(int day) const {
    if (day < start_day || day > end_day()) throw ValidationError("trajectory has no deaths for day " + std::to_string(day));
    return daily_deaths[static_cast<std::size_t>(day - start_day)];
}

double Trajectory::hospital_on(int day) const {
    if (day < start_day || day > end_day()) throw ValidationError("trajectory has no I^C for day " + std::to_string(day));
    return hospital_total[static_cast<std::size_t>(day - start_day)];
}

Trajectory integrate_days(const CompartmentState& initial, int start_day, int n_days, const DynamicsContext& ctx,
                          double dt) {
    if (n_days < 0) throw ValidationError("n_days must be >= 0");
    const int steps = steps_per_day(dt);
    const double h = 1.0 / steps;
    const Rates rates(ctx.params);

    Trajectory traj;
    traj.start_day = start_day;
    traj.states.reserve(static_cast<std::size_t>(n_days) + 1);
    traj.daily_deaths.reserve(static_cast<std::size_t>(n_days) + 1);
    traj.hospital_total.reserve(static_cast<std::size_t>(n_days) + 1);
    traj.states.push_back(initial);
    traj.daily_deaths.push_back(AgeVector{});
    traj.hospital_total.push_back(initial.hospital_total());

    CompartmentState state = initial;
    for (int k = 0; k < n_days; ++k) {
        const int day = start_day + k;
        const auto kernel = transmission_kernel(ctx.params, ctx.contacts(day), ctx.census);
        for (int s = 0; s < steps; ++s) rk4_inplace(state, h, kernel, rates);
        AgeVector dd;
        const auto& prev = traj.states.back()[Compartment::D];
        for (std::size_t g = 0; g < kAgeGroups; ++g) dd[g] = state[Compartment::D][g] - prev[g];
        traj.states.push_back(state);
        traj.daily_deaths.push_back(dd);
        traj.hospital_total.push_back(state.hospital_total());
    }
    return traj;
}

ContactMatrix historical_contacts(const ContactMatrixSet& base, const MobilitySeries& mobility,
                                  const EpidemicParameters& params, int lockdown_start_day, int day) {
    if (day < lockdown_start_day) return base.baseline();
    return assemble_contact_matrix(base, alphas_from_mobility(mobility.at(day), params));
}

Trajectory simulate(const EpidemicParameters& params, const MobilitySeries& mobility, const PopulationCensus& census,
                    const ContactMatrixSet& contacts, int start_day, int end_day, int lockdown_start_day, double dt) {
    params.validate();
    census.validate();
    if (start_day > end_day) throw ValidationError("start_day must not exceed end_day");
    if (end_day > lockdown_start_day) {
        mobility.require_coverage(std::max(start_day, lockdown_start_day), end_day - 1);
    }
    const ContactMatrix baseline = contacts.baseline();
    DynamicsContext ctx{params, census, [&](int day) -> ContactMatrix {
                            if (day < lockdown_start_day) return baseline;
                            return assemble_contact_matrix(contacts, alphas_from_mobility(mobility.at(day), params));
                        }};
    return integrate_days(initialize_state(params, census), start_day, end_day - start_day, ctx, dt);
}

}  // namespace epicontrol
