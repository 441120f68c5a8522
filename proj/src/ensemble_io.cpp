#include "epicontrol/ensemble_io.hpp"

#include <cmath>

#include <json.hpp>

#include "epicontrol/data_files.hpp"
#include "epicontrol/error.hpp"

namespace epicontrol {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json marginal_json(const ParameterPrior& m) {
    json j{{"name", m.name}, {"family", to_string(m.family)}, {"lower", m.lower}, {"upper", m.upper}};
    if (m.family == PriorFamily::TruncatedNormal) {
        j["mean"] = m.mean;
        j["sd"] = m.sd;
    }
    return j;
}

ParameterPrior marginal_from(const json& j, const std::string& path) {
    ParameterPrior m;
    try {
        m.name = j.at("name").get<std::string>();
        m.family = prior_family_from_string(j.value("family", std::string("uniform")));
        m.lower = j.at("lower").get<double>();
        m.upper = j.at("upper").get<double>();
        m.mean = j.value("mean", 0.5 * (m.lower + m.upper));
        m.sd = j.value("sd", m.upper - m.lower);
    } catch (const json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return m;
}

json prior_json(const PriorSpecification& prior) {
    json arr = json::array();
    for (const auto& m : prior.marginals) arr.push_back(marginal_json(m));
    return arr;
}

PriorSpecification prior_from(const json& j, const std::string& path) {
    PriorSpecification prior = PriorSpecification::defaults();
    if (j.is_array()) {
        if (j.size() != EpidemicParameters::kCount) {
            throw ValidationError(path + ": expected " + std::to_string(EpidemicParameters::kCount) + " marginals, got " +
                                  std::to_string(j.size()));
        }
        for (std::size_t i = 0; i < j.size(); ++i) {
            prior.marginals[i] = marginal_from(j[i], path + "[" + std::to_string(i) + "]");
        }
    } else if (j.is_object()) {
        const auto& names = EpidemicParameters::names();
        for (const auto& [key, value] : j.items()) {
            const auto it = std::find(names.begin(), names.end(), key);
            if (it == names.end()) throw ValidationError(path + "." + key + ": unknown parameter");
            json entry = value;
            entry["name"] = key;
            prior.marginals[static_cast<std::size_t>(it - names.begin())] = marginal_from(entry, path + "." + key);
        }
    } else {
        throw ValidationError(path + ": expected an array or object");
    }
    prior.validate();
    return prior;
}

}  // namespace

std::string ensemble_to_json(const CalibrationArtifact& a) {
    json particles = json::array();
    for (const auto& p : a.ensemble.particles) {
        particles.push_back({{"theta", p.theta}, {"weight", p.weight}, {"distance", number_or_null(p.distance)}});
    }
    json history = json::array();
    for (const auto& h : a.ensemble.history) {
        history.push_back({{"generation", h.generation},
                           {"tolerance", number_or_null(h.tolerance)},
                           {"simulations", h.simulations},
                           {"accepted", h.accepted},
                           {"beta_mean", h.beta_mean},
                           {"beta_std", h.beta_std}});
    }
    json j{
        {"schema_version", kEnsembleSchemaVersion},
        {"kind", "posterior-ensemble"},
        {"seed", a.config.seed},
        {"config",
         {{"generations", a.config.generations},
          {"particles", a.config.particles},
          {"quantile", a.config.quantile},
          {"acceptance_floor", a.config.acceptance_floor},
          {"min_draws", a.config.min_draws},
          {"max_kernel_retries", a.config.max_kernel_retries},
          {"weights", {{"w_D", a.config.weights.w_D}, {"w_I", a.config.weights.w_I}}}}},
        {"prior", prior_json(a.prior)},
        {"parameter_names", EpidemicParameters::names()},
        {"dataset", a.dataset_ref},
        {"region", a.region},
        {"observations",
         {{"first_death_day", a.first_death_day},
          {"last_death_day", a.last_death_day},
          {"hospital_first_day", a.hospital_first_day},
          {"hospital_last_day", a.hospital_last_day}}},
        {"previous", a.previous_ref},
        {"generation", a.ensemble.generation},
        {"tolerance", number_or_null(a.ensemble.tolerance)},
        {"status", to_string(a.ensemble.status)},
        {"acceptance_rate", a.ensemble.acceptance_rate},
        {"particles", particles},
        {"history", history},
    };
    return j.dump(1) + "\n";
}

CalibrationArtifact ensemble_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("ensemble file is not valid JSON: ") + e.what());
    }
    CalibrationArtifact a;
    std::string field = "$";
    try {
        field = "schema_version";
        const int version = j.at(field).get<int>();
        if (version != kEnsembleSchemaVersion) {
            throw ValidationError("unsupported ensemble schema_version " + std::to_string(version));
        }
        field = "config";
        const json& c = j.at(field);
        a.config.seed = j.at("seed").get<std::uint64_t>();
        a.config.generations = c.at("generations").get<int>();
        a.config.particles = c.at("particles").get<std::size_t>();
        a.config.quantile = c.at("quantile").get<double>();
        a.config.acceptance_floor = c.value("acceptance_floor", 1e-5);
        a.config.min_draws = c.value("min_draws", std::uint64_t{1000});
        a.config.max_kernel_retries = c.value("max_kernel_retries", 100);
        a.config.weights.w_D = c.at("weights").at("w_D").get<AgeVector>();
        a.config.weights.w_I = c.at("weights").at("w_I").get<double>();
        field = "prior";
        a.prior = prior_from(j.at(field), "prior");
        field = "observations";
        const json& o = j.at(field);
        a.first_death_day = o.at("first_death_day").get<int>();
        a.last_death_day = o.at("last_death_day").get<int>();
        a.hospital_first_day = o.at("hospital_first_day").get<int>();
        a.hospital_last_day = o.at("hospital_last_day").get<int>();
        a.dataset_ref = j.value("dataset", std::string());
        a.region = j.value("region", std::string());
        a.previous_ref = j.value("previous", std::string());
        field = "generation";
        a.ensemble.generation = j.at(field).get<int>();
        a.ensemble.tolerance = number_or_inf(j.at("tolerance"));
        a.ensemble.status = ensemble_status_from_string(j.at("status").get<std::string>());
        a.ensemble.acceptance_rate = j.at("acceptance_rate").get<double>();
        const json& ps = j.at("particles");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            field = "particles[" + std::to_string(i) + "]";
            Particle p;
            const auto theta = ps[i].at("theta").get<std::vector<double>>();
            if (theta.size() != EpidemicParameters::kCount) throw ValidationError(field + ".theta: wrong length");
            std::copy(theta.begin(), theta.end(), p.theta.begin());
            p.weight = ps[i].at("weight").get<double>();
            p.distance = number_or_inf(ps[i].at("distance"));
            a.ensemble.particles.push_back(p);
        }
        field = "history";
        for (const auto& h : j.value("history", json::array())) {
            a.ensemble.history.push_back({h.at("generation").get<int>(), number_or_inf(h.at("tolerance")),
                                          h.at("simulations").get<std::uint64_t>(), h.at("accepted").get<std::size_t>(),
                                          h.at("beta_mean").get<double>(), h.at("beta_std").get<double>()});
        }
    } catch (const json::exception& e) {
        throw ValidationError("ensemble field '" + field + "': " + e.what());
    }
    a.ensemble.validate(a.prior);
    return a;
}

void save_ensemble(const CalibrationArtifact& artifact, const std::filesystem::path& path) {
    write_text_file(path, ensemble_to_json(artifact));
}

CalibrationArtifact load_ensemble(const std::filesystem::path& path) { return ensemble_from_json(read_text_file(path)); }

std::string prior_to_json(const PriorSpecification& prior) { return prior_json(prior).dump(1) + "\n"; }

PriorSpecification prior_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("prior config is not valid JSON: ") + e.what());
    }
    return prior_from(j, "prior");
}

}  // namespace epicontrol
