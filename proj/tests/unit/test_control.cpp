#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "epicontrol/control.hpp"
#include "epicontrol/error.hpp"
#include "support.hpp"

using namespace epicontrol;

namespace {

ModelSetup toy_setup() {
    std::vector<MobilityPoint> m;
    for (int d = 0; d < 120; ++d) m.push_back({d < 22 ? 1.0 : 0.1, d < 17 ? 1.0 : 0.35, d < 17 ? 1.0 : 0.45});
    return {testing::toy_contacts(), testing::toy_census(), MobilitySeries(0, m), 17, kDefaultDt};
}

ControlProblem toy_problem(int t0 = 30) {
    const auto setup = toy_setup();
    ControlProblem p;
    p.contacts = setup.contacts;
    p.census = setup.census;
    p.t0 = t0;
    for (double scale : {0.9, 1.0, 1.1}) {
        EpidemicParameters q;
        q.beta *= scale;
        p.samples.push_back(q);
        p.initial_states.push_back(setup.simulate(q, t0).states.back());
    }
    return p;
}

// Contact matrix written out per row from the location matrices.
ContactMatrix oracle_contacts(const ContactMatrixSet& c, const EpidemicParameters& p, const MobilityPoint& m) {
    ContactMatrix out;
    for (int i = 0; i < 5; ++i) {
        double a_school, a_work, a_other;
        if (i < 3) {
            a_school = p.alpha_123 * m.school;
            a_work = p.alpha_123 * m.work;
            a_other = p.alpha_123 * m.other;
        } else {
            a_school = a_work = a_other = i == 3 ? p.alpha_4 : p.alpha_5;
        }
        for (int j = 0; j < 5; ++j)
            out(i, j) = c.home(i, j) + a_school * c.school(i, j) + a_work * c.work(i, j) + a_other * c.other(i, j);
    }
    return out;
}

}  // namespace

TEST_CASE("hospital penalty") {
    CHECK(hospital_penalty(5, 10) == 0.0);
    CHECK(hospital_penalty(10, 10) == 0.0);
    CHECK(hospital_penalty(15, 10) == 5.0);
    CHECK(hospital_penalty(3, 0) == 3.0);
}

TEST_CASE("block schedules") {
    std::vector<double> x{0.05, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    const auto s = schedule_from_blocks(5, 25, 10, x);
    CHECK(s.start_day == 5);
    CHECK(s.size() == 25);
    CHECK(s.at(5) == MobilityPoint{0.05, 0.4, 0.7});
    CHECK(s.at(14) == MobilityPoint{0.05, 0.4, 0.7});
    CHECK(s.at(15) == MobilityPoint{0.2, 0.5, 0.8});
    CHECK(s.at(29) == MobilityPoint{0.3, 0.6, 0.9});
    CHECK(blocks_from_schedule(s, 10) == x);
    CHECK_THROWS_AS(s.at(30), ValidationError);
    CHECK_THROWS_AS(schedule_from_blocks(5, 25, 10, {0.1, 0.2}), ValidationError);
    CHECK(block_count(30, 10) == 3);
    CHECK(block_count(31, 10) == 4);

    ControlBounds b;
    CHECK_THROWS_AS(s.validate(b), ValidationError);
    const auto ok = schedule_from_blocks(0, 10, 5, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
    ok.validate(b);
    ControlBounds bad;
    bad.lower.work = 1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("cost functional") {
    const auto census = testing::toy_census();
    const auto contacts = testing::toy_contacts();
    OptimizationConfig cfg;
    cfg.h_max = 0.0;
    const CostWeights w{10, 20, 30};

    SUBCASE("one day, one sample, against an independent integration") {
        EpidemicParameters p;
        ControlProblem prob;
        prob.contacts = contacts;
        prob.census = census;
        prob.t0 = 0;
        prob.samples = {p};
        auto s0 = initialize_state(p, census);
        s0[Compartment::I_C1][3] = 500;
        s0[Compartment::I_C2][4] = 700;
        prob.initial_states = {s0};
        const MobilityPoint m{0.5, 0.6, 0.7};
        const ControlSchedule sched{0, {m}};
        const auto c = evaluate_cost(sched, prob, w, cfg);

        const auto C = oracle_contacts(contacts, p, m);
        const auto s1 = testing::reference_integrate(s0, p, C, census, 1, 10);
        double deaths = 0, hosp = 0;
        for (int g = 0; g < 5; ++g) {
            deaths += s1[Compartment::D][g] - s0[Compartment::D][g];
            hosp += s1[Compartment::I_C1][g] + s1[Compartment::I_C2][g];
        }
        CHECK(testing::rel_diff(c.sanitary, 0.5 * (deaths + hosp)) < 1e-9);
        CHECK(testing::rel_diff(c.terminal, testing::reference_r(p, C, census)) < 1e-9);
        const double econ = 5 * 0.25 + 10 * 0.16 + 15 * 0.09;
        CHECK(c.economic == doctest::Approx(econ).epsilon(1e-12));
        CHECK(c.total() == doctest::Approx(c.sanitary + c.economic + c.terminal));
    }
    SUBCASE("no economic cost at full mobility") {
        const auto prob = toy_problem();
        const ControlSchedule full{30, std::vector<MobilityPoint>(10, MobilityPoint{1, 1, 1})};
        CHECK(evaluate_cost(full, prob, w, cfg).economic == 0.0);
    }
    SUBCASE("disease-free population has no sanitary cost") {
        ControlProblem prob;
        prob.contacts = contacts;
        prob.census = census;
        prob.t0 = 0;
        prob.samples = {EpidemicParameters{}};
        CompartmentState s;
        s[Compartment::S] = census.population;
        prob.initial_states = {s};
        const ControlSchedule sched{0, std::vector<MobilityPoint>(5, MobilityPoint{0.5, 0.5, 0.5})};
        const auto c = evaluate_cost(sched, prob, w, cfg);
        CHECK(c.sanitary == 0.0);
        CHECK(c.terminal > 0.0);
    }
    SUBCASE("increasing any weight never lowers the cost") {
        const auto prob = toy_problem();
        Rng rng(4);
        std::uniform_real_distribution<double> u(0.1, 1.0);
        for (int k = 0; k < 10; ++k) {
            ControlSchedule s{30, {}};
            for (int d = 0; d < 5; ++d) s.days.push_back({u(rng), u(rng), u(rng)});
            CostWeights a{u(rng), u(rng), u(rng)};
            CostWeights b = a;
            b.eps_work += 5 * u(rng);
            CHECK(evaluate_cost(s, prob, b, cfg).total() >= evaluate_cost(s, prob, a, cfg).total());
        }
    }
    SUBCASE("sample average") {
        const auto prob = toy_problem();
        const ControlSchedule s{30, std::vector<MobilityPoint>(6, MobilityPoint{0.4, 0.5, 0.6})};
        double sanitary = 0, terminal = 0;
        for (std::size_t k = 0; k < prob.samples.size(); ++k) {
            ControlProblem one = prob;
            one.samples = {prob.samples[k]};
            one.initial_states = {prob.initial_states[k]};
            const auto c = evaluate_cost(s, one, w, cfg);
            sanitary += c.sanitary / 3;
            terminal += c.terminal / 3;
        }
        const auto c = evaluate_cost(s, prob, w, cfg);
        CHECK(c.sanitary == doctest::Approx(sanitary).epsilon(1e-12));
        CHECK(c.terminal == doctest::Approx(terminal).epsilon(1e-12));
    }
    SUBCASE("schedule must start at t0") {
        const auto prob = toy_problem();
        CHECK_THROWS_AS(evaluate_cost(ControlSchedule{29, {MobilityPoint{}}}, prob, w, cfg), ValidationError);
        CHECK_THROWS_AS(evaluate_cost(ControlSchedule{30, {}}, prob, w, cfg), ValidationError);
    }
}

TEST_CASE("schedule annealing") {
    const ControlBounds bounds;
    AnnealConfig ac;
    ac.budget = 200;
    ac.seed = 9;

    SUBCASE("constant objective") {
        const auto r = anneal_schedule([](const ControlSchedule&) { return 7.0; }, bounds, 0, 20, 10, ac);
        CHECK(r.cost == 7.0);
        CHECK(r.evaluations <= 200);
    }
    SUBCASE("never worse than the start, inside bounds, deterministic") {
        const ScheduleObjective f = [](const ControlSchedule& s) {
            double v = 0;
            for (const auto& m : s.days)
                v += std::pow(m.school - 0.37, 2) + std::pow(m.work - 0.8, 2) + std::sin(9 * m.other);
            return v;
        };
        const std::vector<double> x0(6, 0.9);
        const auto a = anneal_schedule(f, bounds, 3, 20, 10, ac, x0);
        const auto b = anneal_schedule(f, bounds, 3, 20, 10, ac, x0);
        CHECK(a.cost <= f(schedule_from_blocks(3, 20, 10, x0)));
        CHECK(a.cost == doctest::Approx(f(a.schedule)));
        a.schedule.validate(bounds);
        CHECK(a.x == b.x);
        CHECK(a.cost == b.cost);
        CHECK(a.schedule.start_day == 3);
    }
}

TEST_CASE("receding-horizon loop") {
    const auto prob = toy_problem();
    const CostWeights w;
    const ControlBounds bounds;
    OptimizationConfig cfg;
    cfg.horizon = 6;
    cfg.prediction_horizon = 4;
    cfg.block_length = 2;
    cfg.anneal_budget = 40;
    cfg.seed = 12;

    SUBCASE("applied schedule and bands") {
        std::vector<NmpcProgress> seen;
        const auto r = nmpc_run(prob, w, bounds, cfg, {[&](const NmpcProgress& p) { seen.push_back(p); }, {}});
        CHECK(r.applied.start_day == 30);
        CHECK(r.applied.size() == 6);
        CHECK(r.step_costs.size() == 6);
        CHECK(r.hospital_band.size() == 7);
        CHECK(r.r_band.size() == 6);
        CHECK_FALSE(r.cancelled);
        r.applied.validate(bounds);
        for (const auto& b : r.hospital_band) {
            CHECK(b.lower <= b.median);
            CHECK(b.median <= b.upper);
        }
        CHECK(r.hospital_band[0].day == 30);
        CHECK(r.r_band.back().day == 35);
        REQUIRE(seen.size() == 7);
        for (std::size_t i = 1; i < seen.size(); ++i) CHECK(seen[i].day_index > seen[i - 1].day_index);
        CHECK(seen.back().day_index == 6);

        const auto again = nmpc_run(prob, w, bounds, cfg);
        CHECK(again.applied.days == r.applied.days);
    }
    SUBCASE("replanning every few days") {
        cfg.replan_every = 4;
        const auto r = nmpc_run(prob, w, bounds, cfg);
        CHECK(r.applied.size() == 6);
        CHECK(r.step_costs.size() == 2);
    }
    SUBCASE("single shot equals one annealing run over the horizon") {
        cfg.receding = false;
        cfg.prediction_horizon = cfg.horizon;
        const auto r = nmpc_run(prob, w, bounds, cfg);
        AnnealConfig ac;
        ac.budget = cfg.anneal_budget;
        ac.seed = derive_seed(cfg.seed, 0x4E4D5043ULL, 0);
        const auto one = anneal_schedule([&](const ControlSchedule& s) { return evaluate_cost(s, prob, w, cfg).total(); },
                                         bounds, 30, 6, 2, ac);
        CHECK(r.applied.days == one.schedule.days);
        CHECK(r.step_costs.size() == 1);
    }
    SUBCASE("cancellation keeps the applied prefix") {
        int polls = 0;
        const auto r = nmpc_run(prob, w, bounds, cfg, {{}, [&] { return ++polls > 2; }});
        CHECK(r.cancelled);
        CHECK(r.applied.size() == 2);
        CHECK(r.hospital_band.size() == 3);
        CHECK(r.r_band.size() == 2);
    }
    SUBCASE("one sample gives degenerate bands") {
        ControlProblem one = prob;
        one.samples.resize(1);
        one.initial_states.resize(1);
        const auto r = nmpc_run(one, w, bounds, cfg);
        for (const auto& b : r.r_band) {
            CHECK(b.lower == b.median);
            CHECK(b.upper == b.median);
        }
    }
    SUBCASE("config validation") {
        cfg.prediction_horizon = 10;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg.prediction_horizon = 4;
        cfg.receding = false;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        ControlProblem empty = prob;
        empty.samples.clear();
        empty.initial_states.clear();
        CHECK_THROWS_AS(empty.validate(), ValidationError);
    }
}

TEST_CASE("prepared problems start from the simulated state") {
    const auto setup = toy_setup();
    PosteriorEnsemble e;
    e.particles = {{EpidemicParameters{}.to_vector(), 1.0, 0}};
    const auto prob = prepare_control_problem(e, setup, 25, 3, 1);
    REQUIRE(prob.samples.size() == 3);
    const auto expected = setup.simulate(EpidemicParameters{}, 25).states.back();
    for (const auto& s : prob.initial_states) CHECK(s.values == expected.values);
    CHECK_THROWS_AS(prepare_control_problem(e, setup, -1, 3, 1), ValidationError);
}

TEST_CASE("optimization artifact formats") {
    OptimizationArtifact a;
    a.t0 = 30;
    a.result.applied = {30, {{0.5, 0.6, 0.7}, {0.4, 0.5, 0.6}}};
    a.result.hospital_band = {{30, 10, 9, 11}, {31, 12, 10, 13}, {32, 14, 11, 15}};
    a.result.r_band = {{30, 0.9, 0.8, 1.0}, {31, 0.95, 0.85, 1.05}};
    a.result.step_costs = {100, 90};
    a.calibration_ref = "sha256:x";
    a.config.horizon = 2;
    a.config.prediction_horizon = 2;
    const auto text = optimization_to_json(a);
    const auto b = optimization_from_json(text);
    CHECK(b.result.applied.days == a.result.applied.days);
    CHECK(b.result.applied.start_day == 30);
    CHECK(b.result.r_band[1].upper == 1.05);
    CHECK(b.calibration_ref == "sha256:x");
    CHECK(optimization_to_json(b) == text);
    const auto j = nlohmann::json::parse(text);
    CHECK(j["kind"] == "optimization");
    CHECK(j["schedule"][1]["day"] == 31);
    CHECK(j["schedule"][1]["m_other"] == 0.6);
    CHECK_THROWS_AS(optimization_from_json("{}"), ValidationError);

    CHECK(format_schedule_csv(a.result.applied) == "day,m_school,m_work,m_other\n30,0.5,0.6,0.7\n31,0.4,0.5,0.6\n");
    CHECK(format_band_csv(a.result.r_band) == "day,median,lower,upper\n30,0.9,0.8,1\n31,0.95,0.85,1.05\n");
}

TEST_CASE("dynamic update") {
    const auto setup = toy_setup();
    const auto data = observe(setup.simulate(EpidemicParameters{}, 50), 50, 17);
    CalibrationArtifact previous;
    previous.last_death_day = 50;
    previous.hospital_last_day = 50;
    PmcConfig pmc;
    pmc.generations = 2;
    pmc.particles = 20;
    OptimizationConfig cfg;
    cfg.horizon = 2;
    cfg.prediction_horizon = 2;
    cfg.block_length = 1;
    cfg.anneal_budget = 10;
    cfg.n_posterior_samples = 3;
    CHECK_THROWS_AS(dynamic_update(previous, "sha256:prev", data, setup, pmc, {}, {}, cfg), ConflictError);

    previous.last_death_day = 40;
    previous.hospital_last_day = 40;
    const auto r = dynamic_update(previous, "sha256:prev", data, setup, pmc, {}, {}, cfg);
    CHECK(r.calibration.previous_ref == "sha256:prev");
    CHECK(r.calibration.last_death_day == 50);
    CHECK(r.problem.t0 == 50);
    CHECK(r.nmpc.applied.start_day == 50);
    CHECK(r.nmpc.applied.size() == 2);
}

TEST_CASE("an update after a shift in the truth tracks the new regime") {
    // Contacts outside the home drop on day 36. Mobility is observed, so each forecast holds the
    // last known mobility value constant past its observation horizon.
    const auto base = toy_setup();
    std::vector<MobilityPoint> shifted;
    for (int d = 0; d < 120; ++d) {
        const auto& m = base.mobility.at(d);
        shifted.push_back(d < 36 ? m : MobilityPoint{m.school, 0.1, 0.1});
    }
    const auto known_until = [&](int last) {
        auto s = base;
        std::vector<MobilityPoint> v(shifted.begin(), shifted.begin() + last + 1);
        v.resize(120, shifted[static_cast<std::size_t>(last)]);
        s.mobility = MobilitySeries(0, v);
        return s;
    };
    const EpidemicParameters truth;
    const auto truth_traj = known_until(119).simulate(truth, 60);

    auto prior = PriorSpecification::defaults();
    const auto v = truth.to_vector();
    for (std::size_t k = 1; k < EpidemicParameters::kCount; ++k) {
        prior.marginals[k].lower = v[k] * 0.999;
        prior.marginals[k].upper = (k >= 6 && k != 16) ? std::min(v[k] * 1.001, 1.0) : v[k] * 1.001;
    }
    PmcConfig pmc;
    pmc.generations = 10;
    pmc.particles = 150;
    pmc.seed = 21;

    const auto before_setup = known_until(35);
    const auto early = observe(truth_traj, 35, 17);
    CalibrationArtifact previous;
    previous.prior = prior;
    previous.config = pmc;
    previous.last_death_day = 35;
    previous.hospital_last_day = 35;
    previous.ensemble = pmc_abc(make_model_runner(before_setup, early), early, prior, pmc);

    OptimizationConfig cfg;
    cfg.horizon = 1;
    cfg.prediction_horizon = 1;
    cfg.block_length = 1;
    cfg.anneal_budget = 5;
    cfg.n_posterior_samples = 2;
    const auto after_setup = known_until(50);
    const auto updated = dynamic_update(previous, "prev", observe(truth_traj, 50, 17), after_setup, pmc, {}, {}, cfg);
    CHECK(updated.calibration.previous_ref == "prev");

    // Squared error of the posterior-mean forecast on the held-out days 51..60.
    const auto forecast_error = [&](const PosteriorEnsemble& e, const ModelSetup& setup) {
        auto p = truth;
        p.beta = posterior_summary(e).mean[0];
        const auto traj = setup.simulate(p, 60);
        double err = 0.0;
        for (int d = 51; d <= 60; ++d) {
            err += std::pow(traj.hospital_on(d) - truth_traj.hospital_on(d), 2);
            for (int i = 0; i < 5; ++i) err += std::pow(traj.deaths_on(d)[i] - truth_traj.deaths_on(d)[i], 2);
        }
        return err;
    };
    const double before = forecast_error(previous.ensemble, before_setup);
    const double after = forecast_error(updated.calibration.ensemble, after_setup);
    CHECK(after * 100 < before);
}

TEST_CASE("updates chain through successive observation horizons") {
    const auto setup = toy_setup();
    const auto data = observe(setup.simulate(EpidemicParameters{}, 50), 50, 17);
    CalibrationArtifact current;
    current.last_death_day = 30;
    current.hospital_last_day = 30;
    PmcConfig pmc;
    pmc.generations = 1;
    pmc.particles = 10;
    OptimizationConfig cfg;
    cfg.horizon = 1;
    cfg.prediction_horizon = 1;
    cfg.block_length = 1;
    cfg.anneal_budget = 3;
    cfg.n_posterior_samples = 2;
    std::string ref = "stage-0";
    for (int stage = 1; stage <= 4; ++stage) {
        const int day = 30 + 5 * stage;
        CAPTURE(day);
        const auto r = dynamic_update(current, ref, data.truncated(day), setup, pmc, {}, {}, cfg);
        CHECK(r.calibration.previous_ref == ref);
        CHECK(r.calibration.last_death_day == day);
        CHECK(r.nmpc.applied.start_day == day);
        current = r.calibration;
        ref = "stage-" + std::to_string(stage);
    }
    CHECK_THROWS_AS(dynamic_update(current, ref, data, setup, pmc, {}, {}, cfg), ConflictError);
}
