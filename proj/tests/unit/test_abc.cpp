#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "epicontrol/abc.hpp"
#include "epicontrol/dataset.hpp"
#include "epicontrol/error.hpp"
#include "support.hpp"

using namespace epicontrol;

namespace {

ObservationSet flat_obs() {
    ObservationSet obs;
    obs.daily_deaths.assign(20, AgeVector{3, 4, 5, 6, 7});
    obs.hospital_first_day = 17;
    obs.hospital.assign(4, 500.0);
    return obs;
}

ModelSetup toy_setup() {
    std::vector<MobilityPoint> m;
    for (int d = 0; d < 80; ++d) m.push_back({d < 22 ? 1.0 : 0.1, d < 17 ? 1.0 : 0.35, d < 17 ? 1.0 : 0.45});
    return {testing::toy_contacts(), testing::toy_census(), MobilitySeries(0, m), 17, kDefaultDt};
}

// Kolmogorov-Smirnov statistic of a sample against Uniform(lo, hi).
double ks_uniform(std::vector<double> x, double lo, double hi) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = (x[i] - lo) / (hi - lo);
        d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
    }
    return d;
}

PriorSpecification pinned_prior(const EpidemicParameters& truth) {
    auto prior = PriorSpecification::defaults();
    const auto v = truth.to_vector();
    for (std::size_t k = 1; k < EpidemicParameters::kCount; ++k) {
        prior.marginals[k].lower = v[k] * 0.999;
        prior.marginals[k].upper = (k >= 6 && k != 16) ? std::min(v[k] * 1.001, 1.0) : v[k] * 1.001;
    }
    return prior;
}

}  // namespace

TEST_CASE("distance") {
    const auto obs = flat_obs();
    CHECK(distance(obs, obs) == 0.0);

    auto d = obs;
    d.daily_deaths[7][3] += 2;
    CHECK(distance(d, obs) == 8.0);

    auto h = obs;
    h.hospital[1] += 10;
    CHECK(distance(h, obs) == 10.0);

    SUBCASE("weighted sum of squares") {
        Rng rng(1);
        std::normal_distribution<double> z;
        for (int k = 0; k < 20; ++k) {
            auto s = obs;
            for (auto& day : s.daily_deaths)
                for (auto& v : day) v += z(rng);
            for (auto& v : s.hospital) v += 10 * z(rng);
            DistanceWeights w;
            w.w_D = {0.5, 1, 1.5, 2, 3};
            w.w_I = 0.25;
            double expected = 0;
            for (std::size_t t = 0; t < obs.daily_deaths.size(); ++t)
                for (int g = 0; g < 5; ++g)
                    expected += w.w_D[g] * std::pow(s.daily_deaths[t][g] - obs.daily_deaths[t][g], 2);
            for (std::size_t t = 0; t < obs.hospital.size(); ++t)
                expected += w.w_I * std::pow(s.hospital[t] - obs.hospital[t], 2);
            CHECK(distance(s, obs, w) == doctest::Approx(expected).epsilon(1e-12));
            CHECK(distance(s, obs, w) > 0.0);
        }
    }
    SUBCASE("misaligned ranges") {
        auto shorter = obs;
        shorter.daily_deaths.pop_back();
        CHECK_THROWS_AS(distance(shorter, obs), ValidationError);
        auto shifted = obs;
        shifted.hospital_first_day = 18;
        CHECK_THROWS_AS(distance(shifted, obs), ValidationError);
    }
    SUBCASE("negative weights") {
        DistanceWeights w;
        w.w_I = -1;
        CHECK_THROWS_AS(w.validate(), ValidationError);
    }
}

TEST_CASE("priors") {
    const auto prior = PriorSpecification::defaults();
    prior.validate();
    CHECK(prior.marginals[0].name == "beta");
    CHECK(prior.marginals[0].lower == 0.01);
    CHECK(prior.marginals[0].upper == 0.5);
    CHECK(prior.marginals[4].upper == 20);
    CHECK(prior.marginals[16].lower == 50);
    CHECK(prior.marginals[16].upper == 600);

    Rng rng(2);
    for (int k = 0; k < 500; ++k) {
        const auto v = prior.sample(rng);
        CHECK(prior.in_support(v));
        CHECK(std::isfinite(prior.log_density(v)));
    }
    auto outside = prior.sample(rng);
    outside[0] = 0.9;
    CHECK_FALSE(prior.in_support(outside));
    CHECK(prior.log_density(outside) == -std::numeric_limits<double>::infinity());

    SUBCASE("log-uniform") {
        ParameterPrior p{"beta", PriorFamily::LogUniform, 0.01, 1.0};
        std::vector<double> x;
        for (int k = 0; k < 4000; ++k) x.push_back(p.sample(rng));
        std::vector<double> logs;
        for (double v : x) logs.push_back(std::log(v));
        CHECK(ks_uniform(logs, std::log(0.01), 0.0) < 1.63 / std::sqrt(4000.0));
        CHECK(p.log_density(0.1) - p.log_density(0.2) == doctest::Approx(std::log(2.0)));
    }
    SUBCASE("truncated normal") {
        ParameterPrior p{"d_L", PriorFamily::TruncatedNormal, 1.0, 3.0, 1.5, 1.0};
        double mean = 0;
        for (int k = 0; k < 4000; ++k) {
            const double v = p.sample(rng);
            CHECK(p.in_support(v));
            mean += v / 4000;
        }
        // Mean of N(1.5, 1) truncated to [1, 3].
        const auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi); };
        const auto Phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
        const double a = -0.5, b = 1.5;
        const double expected = 1.5 + (phi(a) - phi(b)) / (Phi(b) - Phi(a));
        CHECK(mean == doctest::Approx(expected).epsilon(0.02));
        CHECK(p.log_density(1.5) > p.log_density(2.5));
    }
    SUBCASE("invalid specifications") {
        auto bad = prior;
        bad.marginals[1].lower = 0.0;  // durations must stay positive
        CHECK_THROWS_AS(bad.validate(), ValidationError);
        bad = prior;
        std::swap(bad.marginals[1], bad.marginals[2]);
        CHECK_THROWS_AS(bad.validate(), ValidationError);
        bad = prior;
        bad.marginals[6].upper = 1.5;
        CHECK_THROWS_AS(bad.validate(), ValidationError);
        CHECK(prior_family_from_string("log-uniform") == PriorFamily::LogUniform);
        CHECK(to_string(PriorFamily::TruncatedNormal) == "truncated-normal");
        CHECK_THROWS_AS(prior_family_from_string("cauchy"), ValidationError);
    }
}

TEST_CASE("rejection sampling") {
    const auto obs = flat_obs();
    const auto prior = PriorSpecification::defaults();
    const ModelRunner echo = [&](const EpidemicParameters& p) {
        auto s = obs;
        s.hospital[0] += p.beta;
        return s;
    };

    SUBCASE("infinite tolerance reproduces the prior") {
        RejectionConfig cfg;
        cfg.n_target = 1000;
        cfg.seed = 4;
        const auto e = abc_rejection(echo, obs, prior, cfg);
        CHECK(e.status == EnsembleStatus::Ok);
        CHECK(e.acceptance_rate == 1.0);
        REQUIRE(e.particles.size() == 1000);
        e.validate(prior);
        const double crit = 1.63 / std::sqrt(1000.0);  // 1% level
        for (std::size_t k : {0u, 1u, 4u, 9u, 16u, 19u}) {
            std::vector<double> x;
            for (const auto& p : e.particles) x.push_back(p.theta[k]);
            CHECK(ks_uniform(x, prior.marginals[k].lower, prior.marginals[k].upper) < crit);
        }
    }
    SUBCASE("zero tolerance hits the floor") {
        RejectionConfig cfg;
        cfg.tolerance = 0.0;
        cfg.n_target = 10;
        cfg.acceptance_floor = 1e-3;
        const auto e = abc_rejection(echo, obs, prior, cfg);
        CHECK(e.status == EnsembleStatus::AcceptanceFloor);
        CHECK(e.particles.empty());
        CHECK(e.history.at(0).simulations == 1000);
    }
    SUBCASE("accepted particles re-evaluate below the tolerance") {
        const auto setup = toy_setup();
        const EpidemicParameters truth;
        const auto data = observe(setup.simulate(truth, 40), 40, 17);
        const auto runner = make_model_runner(setup, data);
        Rng rng(8);
        std::vector<double> pilot;
        for (int k = 0; k < 100; ++k) pilot.push_back(distance(runner(EpidemicParameters::from_vector(prior.sample(rng))), data));
        RejectionConfig cfg;
        cfg.n_target = 30;
        cfg.seed = 6;
        cfg.tolerance = quantile(pilot, 0.3);
        const auto e = abc_rejection(runner, data, prior, cfg);
        REQUIRE(e.particles.size() == 30);
        for (const auto& p : e.particles) {
            const double d = distance(runner(p.params()), data);
            CHECK(d < cfg.tolerance);
            CHECK(d == p.distance);
        }
    }
}

TEST_CASE("pmc-abc") {
    const auto setup = toy_setup();
    const EpidemicParameters truth;
    const auto data = observe(setup.simulate(truth, 45), 45, 17);
    const auto runner = make_model_runner(setup, data);
    const auto prior = PriorSpecification::defaults();

    SUBCASE("one generation equals rejection at the pilot tolerance") {
        PmcConfig cfg;
        cfg.generations = 1;
        cfg.particles = 40;
        cfg.seed = 17;
        const auto pmc = pmc_abc(runner, data, prior, cfg);
        RejectionConfig rc;
        rc.tolerance = pmc.tolerance;
        rc.n_target = 40;
        rc.seed = 17;
        const auto rej = abc_rejection(runner, data, prior, rc);
        REQUIRE(pmc.particles.size() == rej.particles.size());
        for (std::size_t i = 0; i < rej.particles.size(); ++i) {
            CHECK(pmc.particles[i].theta == rej.particles[i].theta);
            CHECK(pmc.particles[i].weight == rej.particles[i].weight);
        }
    }
    SUBCASE("generation invariants and worker independence") {
        PmcConfig cfg;
        cfg.generations = 4;
        cfg.particles = 60;
        cfg.seed = 5;
        cfg.workers = 1;
        std::vector<PmcProgress> progress;
        const auto a = pmc_abc(runner, data, prior, cfg, {[&](const PmcProgress& p) { progress.push_back(p); }, {}});
        cfg.workers = 3;
        const auto b = pmc_abc(runner, data, prior, cfg);
        CHECK(a.status == EnsembleStatus::Ok);
        CHECK(a.generation == 3);
        a.validate(prior);
        REQUIRE(a.history.size() == 4);
        for (std::size_t g = 1; g < a.history.size(); ++g) CHECK(a.history[g].tolerance < a.history[g - 1].tolerance);
        double sum = 0;
        for (const auto& p : a.particles) {
            sum += p.weight;
            CHECK(p.distance < a.tolerance);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        REQUIRE(a.particles.size() == b.particles.size());
        for (std::size_t i = 0; i < a.particles.size(); ++i) {
            CHECK(a.particles[i].theta == b.particles[i].theta);
            CHECK(a.particles[i].weight == b.particles[i].weight);
        }
        CHECK_FALSE(progress.empty());
        for (std::size_t i = 1; i < progress.size(); ++i) CHECK(progress[i].generation >= progress[i - 1].generation);
    }
    SUBCASE("recovers beta when the other parameters are pinned") {
        PmcConfig cfg;
        cfg.generations = 5;
        cfg.particles = 100;
        cfg.seed = 2;
        const auto pinned = pinned_prior(truth);
        const auto e = pmc_abc(runner, data, pinned, cfg);
        const auto s = posterior_summary(e);
        CHECK(std::abs(s.mean[0] - truth.beta) <= 0.25 * truth.beta);
        for (std::size_t g = 1; g < e.history.size(); ++g) CHECK(e.history[g].beta_std < e.history[g - 1].beta_std);
    }
    SUBCASE("cancellation stops at a generation boundary") {
        PmcConfig cfg;
        cfg.generations = 5;
        cfg.particles = 30;
        int generation = 0;
        PmcCallbacks cb;
        cb.progress = [&](const PmcProgress& p) { generation = p.generation; };
        cb.cancelled = [&] { return generation >= 1; };
        const auto e = pmc_abc(runner, data, prior, cfg, cb);
        CHECK(e.status == EnsembleStatus::Cancelled);
        CHECK(e.generation <= 1);
        CHECK(e.particles.size() == 30);
    }
    SUBCASE("config validation") {
        PmcConfig cfg;
        cfg.particles = 1;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = {};
        cfg.quantile = 1.0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = {};
        cfg.generations = 0;
        CHECK_THROWS_AS(pmc_abc(runner, data, prior, cfg), ValidationError);
    }
}

TEST_CASE("bootstrap resampling") {
    PosteriorEnsemble single;
    single.particles.push_back({EpidemicParameters{}.to_vector(), 1.0, 0.0});
    for (const auto& p : bootstrap_resample(single, 50, 1)) CHECK(p.to_vector() == single.particles[0].theta);

    PosteriorEnsemble two;
    auto a = EpidemicParameters{}.to_vector(), b = a;
    b[0] = 0.3;
    two.particles = {{a, 0.5, 0}, {b, 0.5, 0}};
    const std::size_t n = 20000;
    const auto draws = bootstrap_resample(two, n, 9);
    double count = 0;
    for (const auto& p : draws) count += p.beta == 0.3;
    CHECK(std::abs(count - n / 2.0) <= 3 * std::sqrt(n * 0.25));

    PosteriorEnsemble zero;
    zero.particles = {{a, 1.0, 0}, {b, 0.0, 0}};
    for (const auto& p : bootstrap_resample(zero, 1000, 3)) CHECK(p.beta != 0.3);

    const auto x = bootstrap_resample(two, 100, 42);
    const auto y = bootstrap_resample(two, 100, 42);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i].beta == y[i].beta);
    CHECK_THROWS_AS(bootstrap_resample(PosteriorEnsemble{}, 3, 1), ValidationError);
}

TEST_CASE("posterior summary") {
    auto base = EpidemicParameters{}.to_vector();
    PosteriorEnsemble same;
    same.particles = {{base, 0.25, 0}, {base, 0.75, 0}};
    const auto s0 = posterior_summary(same);
    for (double v : s0.std) CHECK(v == doctest::Approx(0.0).scale(1e-12));

    auto lo = base, hi = base;
    lo[0] = 0.1;
    hi[0] = 0.3;
    PosteriorEnsemble two;
    two.particles = {{lo, 0.5, 0}, {hi, 0.5, 0}};
    const auto s = posterior_summary(two);
    CHECK(s.mean[0] == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(s.std[0] == doctest::Approx(0.1).epsilon(1e-12));

    Rng rng(3);
    const auto prior = PriorSpecification::defaults();
    PosteriorEnsemble many;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 40; ++k) many.particles.push_back({prior.sample(rng), u(rng), 0});
    double total = 0;
    for (const auto& p : many.particles) total += p.weight;
    for (auto& p : many.particles) p.weight /= total;
    const auto sm = posterior_summary(many);
    REQUIRE(sm.covariance.rows() == 20);
    CHECK((sm.covariance - sm.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * sm.covariance.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sm.covariance);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-9 * eig.eigenvalues().maxCoeff());
    for (int k = 0; k < 20; ++k) CHECK(std::sqrt(sm.covariance(k, k)) == doctest::Approx(sm.std[k]).epsilon(1e-9));
}

TEST_CASE("beta and d_R are negatively correlated on the England fixture") {
    const auto ds = load_dataset(testing::kSource / "data/england/dataset");
    const auto obs = ds.observations.truncated(83);
    PmcConfig cfg;
    cfg.generations = 3;
    cfg.particles = 100;
    cfg.seed = 1;
    const auto e = pmc_abc(make_model_runner(ds.setup(), obs), obs, PriorSpecification::defaults(), cfg);
    const auto s = posterior_summary(e);
    CHECK(s.covariance(0, 3) < 0.0);
}

TEST_CASE("quantile") {
    CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
    CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
    CHECK(quantile({5}, 0.9) == 5.0);
    CHECK(quantile({0, 10}, 0.25) == 2.5);
    CHECK(quantile({0, 10}, 0.0) == 0.0);
    CHECK(quantile({0, 10}, 1.0) == 10.0);
    CHECK_THROWS(quantile({}, 0.5));
}
