#include <doctest.h>

#include <cmath>
#include <random>

#include "epicontrol/error.hpp"
#include "epicontrol/prior.hpp"
#include "epicontrol/rng.hpp"
#include "epicontrol/seird.hpp"
#include "support.hpp"

using namespace epicontrol;
using testing::toy_census;
using testing::toy_contacts;

namespace {

CompartmentState random_state(Rng& rng, const PopulationCensus& census) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CompartmentState s;
    for (std::size_t g = 0; g < kAgeGroups; ++g) {
        double left = census.population[g];
        for (std::size_t c = 1; c < kCompartments; ++c) {
            const double v = 0.05 * left * u(rng);
            s.values[c][g] = v;
            left -= v;
        }
        s.values[0][g] = left;
    }
    return s;
}

ContactSchedule constant(const ContactMatrix& c) {
    return [c](int) { return c; };
}

}  // namespace

TEST_CASE("contact assembly") {
    const auto base = toy_contacts();

    SUBCASE("all multipliers one gives the plain sum") {
        const auto c = assemble_contact_matrix(base, AlphaMultipliers{});
        CHECK((c - (base.home + base.work + base.school + base.other)).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("only home left") {
        AlphaMultipliers a;
        a.work = a.school = a.other = AgeVector{};
        CHECK((assemble_contact_matrix(base, a) - base.home).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("halving work in group 1 changes only row 1") {
        AlphaMultipliers a;
        a.work[0] = 0.5;
        const ContactMatrix diff = assemble_contact_matrix(base, a) - base.baseline();
        for (int j = 0; j < 5; ++j) CHECK(diff(0, j) == doctest::Approx(-0.5 * base.work(0, j)).epsilon(1e-14));
        CHECK(diff.bottomRows(4).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("linear in each multiplier vector") {
        Rng rng(4);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 20; ++trial) {
            AlphaMultipliers a, b, mix;
            AgeVector* fields[] = {&a.work, &a.school, &a.other, &b.work, &b.school, &b.other};
            for (auto* f : fields)
                for (auto& v : *f) v = u(rng);
            const double t = u(rng);
            for (int g = 0; g < 5; ++g) {
                mix.work[g] = t * a.work[g] + (1 - t) * b.work[g];
                mix.school[g] = t * a.school[g] + (1 - t) * b.school[g];
                mix.other[g] = t * a.other[g] + (1 - t) * b.other[g];
            }
            const ContactMatrix expected =
                t * assemble_contact_matrix(base, a) + (1 - t) * assemble_contact_matrix(base, b);
            CHECK((assemble_contact_matrix(base, mix) - expected).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("alpha_home other than one is rejected") {
        AlphaMultipliers a;
        a.home[2] = 0.9;
        CHECK_THROWS_AS(a.validate(), ValidationError);
        a.home[2] = 1.0;
        a.work[1] = -0.1;
        CHECK_THROWS_AS(a.validate(), ValidationError);
    }
}

TEST_CASE("alphas from mobility") {
    SUBCASE("full mobility with alpha_123 = 1") {
        const auto a = alphas_from_mobility({1, 1, 1}, 1.0, 0.3, 0.4);
        for (int g = 0; g < 3; ++g) {
            CHECK(a.work[g] == 1.0);
            CHECK(a.school[g] == 1.0);
            CHECK(a.other[g] == 1.0);
        }
    }
    SUBCASE("product rule for groups 1-3") {
        const auto a = alphas_from_mobility({1.0, 0.4, 1.0}, 0.5, 0.57, 0.71);
        for (int g = 0; g < 3; ++g) CHECK(a.work[g] == doctest::Approx(0.2).epsilon(1e-15));
    }
    SUBCASE("groups 4 and 5 ignore mobility") {
        const auto a = alphas_from_mobility({0.1, 0.31, 0.41}, 0.63, 0.57, 0.71);
        for (const auto* v : {&a.work, &a.school, &a.other}) {
            CHECK((*v)[3] == 0.57);
            CHECK((*v)[4] == 0.71);
        }
        for (int g = 0; g < 5; ++g) CHECK(a.home[g] == 1.0);
    }
    SUBCASE("clamp policy") {
        CHECK(clamp_mobility(-0.2) == 0.0);
        CHECK(clamp_mobility(0.7) == 0.7);
        CHECK(clamp_mobility(2.4) == 1.5);
    }
}

TEST_CASE("derivative") {
    const auto census = toy_census();
    const auto C = toy_contacts().baseline();
    EpidemicParameters p;

    SUBCASE("disease-free state is a fixed point") {
        CompartmentState s;
        s[Compartment::S] = census.population;
        const auto d = derivative(s, p, C, census);
        for (std::size_t k = 0; k < CompartmentState::size(); ++k) CHECK(d.data()[k] == 0.0);
    }
    SUBCASE("no transmission") {
        Rng rng(1);
        const auto s = random_state(rng, census);
        p.beta = 0.0;
        const auto d = derivative(s, p, C, census);
        for (std::size_t g = 0; g < kAgeGroups; ++g) {
            CHECK(d[Compartment::S][g] == 0.0);
            CHECK(d[Compartment::E][g] == doctest::Approx(-s[Compartment::E][g] / p.d_L).epsilon(1e-14));
        }
    }
    SUBCASE("matches the equations and sums to zero") {
        Rng rng(2);
        const auto prior = PriorSpecification::defaults();
        for (int trial = 0; trial < 50; ++trial) {
            const auto q = EpidemicParameters::from_vector(prior.sample(rng));
            const auto s = random_state(rng, census);
            const auto d = derivative(s, q, C, census);
            const auto ref = testing::reference_derivative(s, q, C, census);
            double total = 0, scale = 0;
            for (std::size_t k = 0; k < CompartmentState::size(); ++k) {
                CHECK(d.data()[k] == doctest::Approx(ref.data()[k]).epsilon(1e-12));
                total += d.data()[k];
                scale = std::max(scale, std::abs(d.data()[k]));
            }
            CHECK(std::abs(total) <= 1e-12 * std::max(scale, 1.0));
        }
    }
    SUBCASE("empty age group is structural") {
        auto bad = census;
        bad.population[2] = 0.0;
        CHECK_THROWS_AS(derivative(CompartmentState{}, p, C, bad), StructuralError);
    }
}

TEST_CASE("rk4 step") {
    const auto census = toy_census();
    EpidemicParameters p;

    SUBCASE("zero field leaves the state unchanged") {
        CompartmentState s;
        s[Compartment::S] = census.population;
        s[Compartment::R][1] = 1000;
        s[Compartment::D][4] = 50;
        DynamicsContext ctx{p, census, constant(toy_contacts().baseline())};
        const auto next = rk4_step(s, 0.0, 0.1, ctx);
        for (std::size_t k = 0; k < CompartmentState::size(); ++k) CHECK(next.data()[k] == s.data()[k]);
    }
    SUBCASE("exponential decay of E") {
        p.beta = 0.0;
        p.d_L = 2.0;  // kappa = 0.5
        CompartmentState s;
        s[Compartment::S] = census.population;
        s[Compartment::E][0] = 100.0;
        DynamicsContext ctx{p, census, constant(toy_contacts().baseline())};
        const auto next = rk4_step(s, 0.0, 0.1, ctx);
        CHECK(std::abs(next[Compartment::E][0] - 100.0 * std::exp(-0.05)) / (100.0 * std::exp(-0.05)) <= 1e-6);
        CHECK(next[Compartment::E][0] == doctest::Approx(95.1229).epsilon(1e-6));
    }
    SUBCASE("matches an independent RK4 over ten days") {
        p.n_in = 5000;
        const auto C = toy_contacts().baseline();
        DynamicsContext ctx{p, census, constant(C)};
        const auto init = initialize_state(p, census);
        const auto lib = integrate_days(init, 0, 10, ctx).states.back();
        const auto ref = testing::reference_integrate(init, p, C, census, 10, 10);
        for (std::size_t k = 0; k < CompartmentState::size(); ++k)
            CHECK(lib.data()[k] == doctest::Approx(ref.data()[k]).epsilon(1e-10));
    }
    SUBCASE("contact matrix follows the day of the step midpoint") {
        p.n_in = 5000;
        const auto init = initialize_state(p, census);
        const ContactMatrix low = 0.2 * toy_contacts().baseline();
        const ContactMatrix high = toy_contacts().baseline();
        DynamicsContext ctx{p, census, [&](int day) { return day < 1 ? low : high; }};
        const auto a = rk4_step(init, 0.9, 0.1, ctx);
        DynamicsContext lo{p, census, constant(low)};
        const auto b = rk4_step(init, 0.9, 0.1, lo);
        for (std::size_t k = 0; k < CompartmentState::size(); ++k) CHECK(a.data()[k] == b.data()[k]);
    }
    SUBCASE("invalid dt") {
        DynamicsContext ctx{p, census, constant(toy_contacts().baseline())};
        CHECK_THROWS_AS(rk4_step(CompartmentState{}, 0, 0.0, ctx), ValidationError);
        CHECK_THROWS_AS(integrate_days(initialize_state(p, census), 0, 3, ctx, 0.3), ValidationError);
    }
}

TEST_CASE("initial state") {
    const auto census = toy_census();
    EpidemicParameters p;

    SUBCASE("split of 300 seeds") {
        p.n_in = 300;
        const auto s = initialize_state(p, census);
        const AgeVector expected{30, 120, 105, 30, 15};
        for (std::size_t g = 0; g < kAgeGroups; ++g) {
            const double seeded = s[Compartment::E][g] + s[Compartment::I_SC1][g] + s[Compartment::I_SC2][g];
            CHECK(seeded == doctest::Approx(expected[g]).epsilon(1e-14));
            CHECK(s[Compartment::S][g] + seeded == doctest::Approx(census.population[g]).epsilon(1e-15));
            CHECK(s[Compartment::I_C1][g] == 0.0);
            CHECK(s[Compartment::I_C2][g] == 0.0);
            CHECK(s[Compartment::R][g] == 0.0);
            CHECK(s[Compartment::D][g] == 0.0);
        }
    }
    SUBCASE("group 2 with rho = 0.05") {
        p.n_in = 300;
        p.rho[1] = 0.05;
        const auto s = initialize_state(p, census);
        CHECK(s[Compartment::E][1] == doctest::Approx(40.0).epsilon(1e-14));
        CHECK(s[Compartment::I_SC1][1] == doctest::Approx(4.0).epsilon(1e-14));
        CHECK(s[Compartment::I_SC2][1] == doctest::Approx(76.0).epsilon(1e-14));
    }
    SUBCASE("no seeds") {
        p.n_in = 0;
        const auto s = initialize_state(p, census);
        for (std::size_t g = 0; g < kAgeGroups; ++g) CHECK(s[Compartment::S][g] == census.population[g]);
        CHECK(s.total() == doctest::Approx(census.total()));
    }
    SUBCASE("more seeds than people") {
        p.n_in = 1e9;
        CHECK_THROWS_AS(initialize_state(p, census), ValidationError);
    }
}

TEST_CASE("simulate") {
    const auto census = toy_census();
    const auto contacts = toy_contacts();
    std::vector<MobilityPoint> m;
    for (int d = 0; d < 320; ++d) m.push_back({d < 20 ? 1.0 : 0.1, 0.5 + 0.2 * std::sin(d / 5.0), 0.6});
    const MobilitySeries mobility(0, m);

    SUBCASE("disease-free run is constant") {
        EpidemicParameters p;
        p.n_in = 0;
        const auto t = simulate(p, mobility, census, contacts, 0, 30, 17);
        REQUIRE(t.states.size() == 31);
        for (const auto& s : t.states)
            for (std::size_t k = 0; k < CompartmentState::size(); ++k) CHECK(s.data()[k] == t.states[0].data()[k]);
    }
    SUBCASE("invariants over 300 days at random parameters") {
        Rng rng(9);
        const auto prior = PriorSpecification::defaults();
        for (int trial = 0; trial < 20; ++trial) {
            const auto p = EpidemicParameters::from_vector(prior.sample(rng));
            const auto t = simulate(p, mobility, census, contacts, 0, 300, 17);
            const auto n0 = t.states[0].group_totals();
            for (std::size_t k = 1; k < t.states.size(); ++k) {
                const auto& s = t.states[k];
                const auto& prev = t.states[k - 1];
                const auto n = s.group_totals();
                for (std::size_t g = 0; g < kAgeGroups; ++g) {
                    CHECK(std::abs(n[g] - n0[g]) <= 1e-8 * n0[g]);
                    CHECK(s[Compartment::D][g] >= prev[Compartment::D][g]);
                    CHECK(s[Compartment::S][g] <= prev[Compartment::S][g]);
                    CHECK(t.daily_deaths[k][g] == doctest::Approx(s[Compartment::D][g] - prev[Compartment::D][g]));
                }
                CHECK(s.min_entry() >= -1e-9);
                CHECK(t.hospital_total[k] == doctest::Approx(s.hospital_total()));
            }
        }
    }
    SUBCASE("baseline contacts before lockdown, mobility after") {
        EpidemicParameters p;
        CHECK((historical_contacts(contacts, mobility, p, 17, 16) - contacts.baseline()).cwiseAbs().maxCoeff() == 0.0);
        const auto after = historical_contacts(contacts, mobility, p, 17, 25);
        const auto expected = assemble_contact_matrix(contacts, alphas_from_mobility(mobility.at(25), p));
        CHECK((after - expected).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("mobility gap names the missing days") {
        const MobilitySeries short_series(0, std::vector<MobilityPoint>(40));
        try {
            simulate(EpidemicParameters{}, short_series, census, contacts, 0, 45, 17);
            FAIL("expected a validation error");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("40") != std::string::npos);
        }
    }
    SUBCASE("parameter validation") {
        EpidemicParameters p;
        p.d_C = 0;
        CHECK_THROWS_AS(simulate(p, mobility, census, contacts, 0, 10, 17), ValidationError);
        p = {};
        p.rho[3] = 1.2;
        CHECK_THROWS_AS(p.validate(), ValidationError);
        p = {};
        p.alpha_5 = -0.1;
        CHECK_THROWS_AS(p.validate(), ValidationError);
    }
}

TEST_CASE("parameter vector round trip") {
    EpidemicParameters p;
    p.rho[2] = 0.123;
    p.alpha_4 = 0.4;
    const auto v = p.to_vector();
    CHECK(v.size() == 20);
    CHECK(EpidemicParameters::names()[0] == "beta");
    CHECK(EpidemicParameters::names()[19] == "alpha_5");
    const auto q = EpidemicParameters::from_vector(v);
    CHECK(q.to_vector() == v);
}
