#include "epicontrol/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "epicontrol/artifact_store.hpp"
#include "epicontrol/checksum.hpp"
#include "epicontrol/csv_format.hpp"
#include "epicontrol/data_files.hpp"
#include "epicontrol/ensemble_io.hpp"
#include "epicontrol/error.hpp"
#include "epicontrol/parallel.hpp"
#include "epicontrol/repro.hpp"
#include "epicontrol/rng.hpp"

namespace epicontrol {

using nlohmann::json;

std::string to_string(JobKind kind) {
    switch (kind) {
        case JobKind::Ingest: return "ingest";
        case JobKind::Calibrate: return "calibrate";
        case JobKind::Simulate: return "simulate";
        case JobKind::Optimize: return "optimize";
        case JobKind::Nmpc: return "nmpc";
        case JobKind::DynamicUpdate: return "dynamic-update";
    }
    return "ingest";
}

JobKind job_kind_from_string(const std::string& name) {
    for (auto k : {JobKind::Ingest, JobKind::Calibrate, JobKind::Simulate, JobKind::Optimize, JobKind::Nmpc,
                   JobKind::DynamicUpdate}) {
        if (to_string(k) == name) return k;
    }
    throw FieldError("kind", "unknown job kind '" + name + "'");
}

namespace {

enum class FieldType { String, Integer, Number, Boolean, Object, Array, Any };

struct FieldSpec {
    FieldType type;
    bool required = false;
};

using Schema = std::map<std::string, FieldSpec>;

const Schema& schema_for(JobKind kind) {
    static const Schema nmpc_fields{
        {"dataset", {FieldType::String, true}},      {"calibration", {FieldType::String, true}},
        {"t0", {FieldType::Integer}},                {"eps_school", {FieldType::Number}},
        {"eps_work", {FieldType::Number}},           {"eps_other", {FieldType::Number}},
        {"horizon", {FieldType::Integer}},           {"prediction_horizon", {FieldType::Integer}},
        {"block_length", {FieldType::Integer}},      {"samples", {FieldType::Integer}},
        {"budget", {FieldType::Integer}},            {"h_max", {FieldType::Number}},
        {"replan_every", {FieldType::Integer}},      {"seed", {FieldType::Integer}},
        {"bounds", {FieldType::Object}},             {"label", {FieldType::String}},
    };
    static const Schema calibrate_fields{
        {"dataset", {FieldType::String, true}}, {"generations", {FieldType::Integer}},
        {"particles", {FieldType::Integer}},    {"quantile", {FieldType::Number}},
        {"seed", {FieldType::Integer}},         {"last_day", {FieldType::Integer}},
        {"prior", {FieldType::Any}},            {"w_D", {FieldType::Array}},
        {"w_I", {FieldType::Number}},           {"acceptance_floor", {FieldType::Number}},
        {"min_draws", {FieldType::Integer}},    {"label", {FieldType::String}},
    };
    static const std::map<JobKind, Schema> schemas = [] {
        std::map<JobKind, Schema> m;
        m[JobKind::Ingest] = {
            {"mobility_csv", {FieldType::String, true}}, {"deaths_csv", {FieldType::String, true}},
            {"hospital_csv", {FieldType::String, true}}, {"contacts", {FieldType::String, true}},
            {"census", {FieldType::String, true}},       {"region", {FieldType::String}},
            {"preset", {FieldType::String}},             {"epidemic_start", {FieldType::String}},
            {"lockdown_start", {FieldType::String}},     {"school_closure", {FieldType::String}},
            {"savgol_window", {FieldType::Integer}},     {"savgol_order", {FieldType::Integer}},
            {"max_gap_days", {FieldType::Integer}},      {"age_bands", {FieldType::Object}},
            {"label", {FieldType::String}},
        };
        m[JobKind::Calibrate] = calibrate_fields;
        m[JobKind::Simulate] = {
            {"dataset", {FieldType::String, true}}, {"params", {FieldType::Object}},
            {"calibration", {FieldType::String}},   {"samples", {FieldType::Integer}},
            {"end_day", {FieldType::Integer}},      {"seed", {FieldType::Integer}},
            {"label", {FieldType::String}},
        };
        m[JobKind::Optimize] = nmpc_fields;
        m[JobKind::Nmpc] = nmpc_fields;
        Schema update = nmpc_fields;
        for (const auto& key : {"generations", "particles", "quantile", "w_D", "w_I", "acceptance_floor", "min_draws"}) {
            update[key] = calibrate_fields.at(key);
        }
        m[JobKind::DynamicUpdate] = update;
        return m;
    }();
    return schemas.at(kind);
}

bool type_matches(const json& v, FieldType t) {
    switch (t) {
        case FieldType::String: return v.is_string();
        case FieldType::Integer: return v.is_number_integer();
        case FieldType::Number: return v.is_number();
        case FieldType::Boolean: return v.is_boolean();
        case FieldType::Object: return v.is_object();
        case FieldType::Array: return v.is_array();
        case FieldType::Any: return true;
    }
    return false;
}

const char* type_name(FieldType t) {
    switch (t) {
        case FieldType::String: return "a string";
        case FieldType::Integer: return "an integer";
        case FieldType::Number: return "a number";
        case FieldType::Boolean: return "a boolean";
        case FieldType::Object: return "an object";
        case FieldType::Array: return "an array";
        case FieldType::Any: return "any value";
    }
    return "a value";
}

void check_schema(JobKind kind, const json& config) {
    if (!config.is_object()) throw FieldError("config", "must be an object");
    const Schema& schema = schema_for(kind);
    for (const auto& [key, value] : config.items()) {
        const auto it = schema.find(key);
        if (it == schema.end()) throw FieldError("config." + key, "unknown field for a " + to_string(kind) + " job");
        if (!type_matches(value, it->second.type)) {
            throw FieldError("config." + key, std::string("must be ") + type_name(it->second.type));
        }
    }
    for (const auto& [key, spec] : schema) {
        if (spec.required && !config.contains(key)) throw FieldError("config." + key, "is required");
    }
}

template <typename T>
T field_or(const json& config, const std::string& key, T fallback) {
    if (!config.contains(key)) return fallback;
    try {
        return config.at(key).get<T>();
    } catch (const json::exception&) {
        throw FieldError("config." + key, "has the wrong type");
    }
}

long long int_field(const json& config, const std::string& key, long long fallback, long long lo, long long hi) {
    const auto v = field_or<long long>(config, key, fallback);
    if (v < lo || v > hi) {
        throw FieldError("config." + key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return v;
}

std::uint64_t seed_field(const json& config) {
    if (!config.contains("seed")) return 0;
    const json& v = config.at("seed");
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    throw FieldError("config.seed", "must be a non-negative integer");
}

double number_field(const json& config, const std::string& key, double fallback) {
    const double v = field_or<double>(config, key, fallback);
    if (!std::isfinite(v)) throw FieldError("config." + key, "must be finite");
    return v;
}

std::filesystem::path resolve_path(const std::string& p, const JobContext& ctx) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : ctx.data_dir / path;
}

Date date_field(const json& config, const std::string& key, Date fallback) {
    if (!config.contains(key)) return fallback;
    try {
        return parse_date(config.at(key).get<std::string>());
    } catch (const Error& e) {
        throw FieldError("config." + key, e.what());
    }
}

PmcConfig pmc_config_from(const json& c, int workers) {
    PmcConfig p;
    p.generations = static_cast<int>(int_field(c, "generations", 3, 1, 1000));
    p.particles = static_cast<std::size_t>(int_field(c, "particles", 100, 2, 10000000));
    p.quantile = number_field(c, "quantile", 0.5);
    if (!(p.quantile > 0.0 && p.quantile < 1.0)) throw FieldError("config.quantile", "must lie in (0, 1)");
    p.seed = seed_field(c);
    p.acceptance_floor = number_field(c, "acceptance_floor", 1e-5);
    if (!(p.acceptance_floor >= 0.0 && p.acceptance_floor < 1.0)) {
        throw FieldError("config.acceptance_floor", "must lie in [0, 1)");
    }
    p.min_draws = static_cast<std::uint64_t>(int_field(c, "min_draws", 1000, 1, 1000000000));
    if (c.contains("w_D")) {
        const json& w = c.at("w_D");
        if (w.size() != kAgeGroups) throw FieldError("config.w_D", "must have 5 entries");
        for (std::size_t i = 0; i < kAgeGroups; ++i) {
            if (!w[i].is_number() || !(w[i].get<double>() >= 0.0)) throw FieldError("config.w_D", "entries must be >= 0");
            p.weights.w_D[i] = w[i].get<double>();
        }
    }
    p.weights.w_I = number_field(c, "w_I", 0.1);
    if (!(p.weights.w_I >= 0.0)) throw FieldError("config.w_I", "must be >= 0");
    p.workers = workers;
    return p;
}

PriorSpecification prior_from_config(const json& c) {
    if (!c.contains("prior")) return PriorSpecification::defaults();
    try {
        return prior_from_json(c.at("prior").dump());
    } catch (const FieldError&) {
        throw;
    } catch (const ValidationError& e) {
        throw FieldError("config.prior", e.what());
    }
}

OptimizationConfig optimization_config_from(const json& c, bool receding, int workers) {
    OptimizationConfig o;
    o.horizon = static_cast<int>(int_field(c, "horizon", 90, 1, 3650));
    o.prediction_horizon = static_cast<int>(int_field(c, "prediction_horizon", receding ? 30 : o.horizon, 1, 3650));
    if (o.prediction_horizon > o.horizon) {
        throw FieldError("config.prediction_horizon", "must not exceed the horizon (T_opt <= T_h)");
    }
    if (!receding && o.prediction_horizon != o.horizon) {
        throw FieldError("config.prediction_horizon", "must equal the horizon for a one-shot optimisation");
    }
    o.receding = receding;
    o.block_length = static_cast<int>(int_field(c, "block_length", 10, 1, 3650));
    o.n_posterior_samples = static_cast<std::size_t>(int_field(c, "samples", 50, 1, 100000));
    o.anneal_budget = static_cast<std::size_t>(int_field(c, "budget", 2000, 1, 100000000));
    o.h_max = number_field(c, "h_max", 10000.0);
    if (!(o.h_max >= 0.0)) throw FieldError("config.h_max", "must be >= 0");
    o.replan_every = static_cast<int>(int_field(c, "replan_every", 1, 1, 3650));
    o.seed = seed_field(c);
    o.workers = workers;
    return o;
}

CostWeights weights_from(const json& c) {
    CostWeights w{number_field(c, "eps_school", 100.0), number_field(c, "eps_work", 100.0),
                  number_field(c, "eps_other", 100.0)};
    for (const auto& [key, v] : {std::pair{"eps_school", w.eps_school}, {"eps_work", w.eps_work}, {"eps_other", w.eps_other}}) {
        if (!(v >= 0.0)) throw FieldError(std::string("config.") + key, "must be >= 0");
    }
    return w;
}

ControlBounds bounds_from(const json& c) {
    ControlBounds b;
    if (!c.contains("bounds")) return b;
    const json& j = c.at("bounds");
    auto read = [&](const char* channel, double& lo, double& hi) {
        if (!j.contains(channel)) return;
        const json& pair = j.at(channel);
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number()) {
            throw FieldError(std::string("config.bounds.") + channel, "must be [lower, upper]");
        }
        lo = pair[0].get<double>();
        hi = pair[1].get<double>();
    };
    for (const auto& [key, _] : j.items()) {
        if (key != "school" && key != "work" && key != "other") throw FieldError("config.bounds." + key, "unknown channel");
    }
    read("school", b.lower.school, b.upper.school);
    read("work", b.lower.work, b.upper.work);
    read("other", b.lower.other, b.upper.other);
    try {
        b.validate();
    } catch (const ValidationError& e) {
        throw FieldError("config.bounds", e.what());
    }
    return b;
}

EpidemicParameters params_from(const json& c) {
    EpidemicParameters p;
    if (!c.contains("params")) return p;
    auto v = p.to_vector();
    const auto& names = EpidemicParameters::names();
    for (const auto& [key, value] : c.at("params").items()) {
        const auto it = std::find(names.begin(), names.end(), key);
        if (it == names.end()) throw FieldError("config.params." + key, "unknown parameter");
        if (!value.is_number()) throw FieldError("config.params." + key, "must be a number");
        v[static_cast<std::size_t>(it - names.begin())] = value.get<double>();
    }
    p = EpidemicParameters::from_vector(v);
    try {
        p.validate();
    } catch (const ValidationError& e) {
        throw FieldError("config.params", e.what());
    }
    return p;
}

void check_reference_exists(const json& config, const std::string& key, bool directory, const JobContext& ctx) {
    if (!config.contains(key)) return;
    const auto ref = config.at(key).get<std::string>();
    if (ctx.store && ArtifactStore::is_ref(ref)) {
        if (!ctx.store->exists(ref)) throw FieldError("config." + key, "artifact '" + ref + "' not found");
        return;
    }
    const auto path = resolve_path(ref, ctx);
    const bool ok = directory ? std::filesystem::is_directory(path) : std::filesystem::is_regular_file(path);
    if (!ok) throw FieldError("config." + key, "'" + ref + "' does not resolve to an artifact or " + (directory ? "directory" : "file"));
}

struct Resolved {
    Dataset dataset;
    std::string dataset_ref;
};

Resolved resolve_dataset_with_ref(const std::string& reference, const JobContext& ctx) {
    Resolved r;
    if (ctx.store && ArtifactStore::is_ref(reference) && ctx.store->exists(reference)) {
        r.dataset = dataset_from_bundle(ctx.store->get(reference));
        r.dataset_ref = reference;
    } else {
        r.dataset = load_dataset(resolve_path(reference, ctx));
        r.dataset_ref = sha256_hex(dataset_to_bundle(r.dataset));
    }
    return r;
}

std::string calibration_text(const std::string& reference, const JobContext& ctx) {
    if (ctx.store && ArtifactStore::is_ref(reference) && ctx.store->exists(reference)) return ctx.store->get(reference);
    return read_text_file(resolve_path(reference, ctx));
}

JobOutput json_output(std::string name, std::string kind, std::string content) {
    return {name, name + ".json", std::move(kind), "application/json", std::move(content)};
}

JobOutput csv_output(std::string name, std::string content) {
    return {name, name + ".csv", name + "-csv", "text/csv", std::move(content)};
}

std::string posterior_summary_csv(const PosteriorEnsemble& e) {
    const auto s = posterior_summary(e);
    CsvWriter w({"parameter", "mean", "std"});
    const auto& names = EpidemicParameters::names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        w.add_row({names[i], format_number(s.mean[i]), format_number(s.std[i])});
    }
    return w.str();
}

std::function<void(const PmcProgress&)> pmc_progress(const JobContext& ctx, double from, double to) {
    if (!ctx.progress) return {};
    return [&ctx, from, to](const PmcProgress& p) {
        const double within = std::min(1.0, static_cast<double>(p.accepted) / static_cast<double>(std::max<std::size_t>(p.particles, 1)));
        const double frac = (static_cast<double>(p.generation) + within) / static_cast<double>(std::max(p.generations, 1));
        ctx.progress(from + (to - from) * std::min(frac, 1.0), json{{"stage", "calibrate"},
                                                                   {"generation", p.generation},
                                                                   {"generations", p.generations},
                                                                   {"accepted", p.accepted},
                                                                   {"particles", p.particles},
                                                                   {"simulations", p.simulations}});
    };
}

std::function<void(const NmpcProgress&)> nmpc_progress(const JobContext& ctx, double from, double to) {
    if (!ctx.progress) return {};
    return [&ctx, from, to](const NmpcProgress& p) {
        const double frac = static_cast<double>(p.day_index) / static_cast<double>(std::max(p.horizon, 1));
        ctx.progress(from + (to - from) * frac, json{{"stage", "nmpc"}, {"day_index", p.day_index}, {"horizon", p.horizon}});
    };
}

int observed_last_day(const CalibrationArtifact& c) { return std::max(c.last_death_day, c.hospital_last_day); }

std::vector<JobOutput> optimization_outputs(const OptimizationArtifact& a) {
    return {json_output("optimization", "optimization", optimization_to_json(a)),
            csv_output("schedule", format_schedule_csv(a.result.applied)),
            csv_output("hospital_band", format_band_csv(a.result.hospital_band)),
            csv_output("r_band", format_band_csv(a.result.r_band))};
}

JobResult run_ingest(const json& c, const JobContext& ctx) {
    IngestInputs in;
    std::optional<CountryPreset> preset;
    if (c.contains("preset")) {
        preset = find_preset(c.at("preset").get<std::string>());
        if (!preset) throw FieldError("config.preset", "unknown preset '" + c.at("preset").get<std::string>() + "'");
    }
    in.mobility_csv = resolve_path(c.at("mobility_csv").get<std::string>(), ctx);
    in.deaths_csv = resolve_path(c.at("deaths_csv").get<std::string>(), ctx);
    in.hospital_csv = resolve_path(c.at("hospital_csv").get<std::string>(), ctx);
    in.contacts_file = resolve_path(c.at("contacts").get<std::string>(), ctx);
    in.census_file = resolve_path(c.at("census").get<std::string>(), ctx);
    in.region = field_or<std::string>(c, "region", preset ? preset->region : std::string());
    if (in.region.empty()) throw FieldError("config.region", "is required when no preset is given");
    in.mobility_config.epidemic_start =
        date_field(c, "epidemic_start", preset ? preset->epidemic_start : in.mobility_config.epidemic_start);
    in.mobility_config.school_closure =
        date_field(c, "school_closure", preset ? preset->school_closure : in.mobility_config.school_closure);
    in.lockdown_start = date_field(c, "lockdown_start", preset ? preset->lockdown_start : in.lockdown_start);
    in.mobility_config.savgol_window = static_cast<int>(int_field(c, "savgol_window", 15, 3, 365));
    in.mobility_config.savgol_order = static_cast<int>(int_field(c, "savgol_order", 2, 0, 10));
    in.mobility_config.max_gap_days = static_cast<int>(int_field(c, "max_gap_days", 3, 0, 365));
    if (c.contains("age_bands")) {
        for (const auto& [label, v] : c.at("age_bands").items()) {
            if (v.is_null()) {
                in.age_bands.overrides[label] = std::nullopt;
            } else if (v.is_number_integer() && v.get<int>() >= 1 && v.get<int>() <= 5) {
                in.age_bands.overrides[label] = v.get<int>() - 1;
            } else {
                throw FieldError("config.age_bands." + label, "must be a group number 1-5 or null");
            }
        }
    }
    IngestReport report;
    const Dataset ds = ingest_dataset(in, &report);
    JobResult r;
    r.outputs.push_back(json_output("dataset", "dataset-bundle", dataset_to_bundle(ds, &report)));
    r.outputs.push_back(json_output("ingest_report", "ingest-report", ingest_report_to_json(report)));
    return r;
}

JobResult run_calibrate(const json& c, const JobContext& ctx) {
    Resolved res = resolve_dataset_with_ref(c.at("dataset").get<std::string>(), ctx);
    ObservationSet obs = res.dataset.observations;
    if (c.contains("last_day")) obs = obs.truncated(c.at("last_day").get<int>());
    PmcConfig cfg = pmc_config_from(c, ctx.workers);
    CalibrationArtifact a;
    a.prior = prior_from_config(c);
    a.config = cfg;
    a.dataset_ref = res.dataset_ref;
    a.region = res.dataset.region;
    a.first_death_day = obs.first_death_day;
    a.last_death_day = obs.last_day();
    a.hospital_first_day = obs.hospital_first_day;
    a.hospital_last_day = obs.hospital_last_day();
    const ModelRunner runner = make_model_runner(res.dataset.setup(), obs);
    a.ensemble = pmc_abc(runner, obs, a.prior, cfg, {pmc_progress(ctx, 0.0, 1.0), ctx.cancelled});
    JobResult r;
    if (a.ensemble.status == EnsembleStatus::Cancelled) {
        r.cancelled = true;
        r.message = "calibration cancelled after generation " + std::to_string(a.ensemble.generation);
        return r;
    }
    if (a.ensemble.empty()) throw NumericError("calibration accepted no particles (acceptance rate below the floor)");
    if (a.ensemble.status == EnsembleStatus::AcceptanceFloor) {
        r.message = "acceptance rate fell below the floor; returning generation " + std::to_string(a.ensemble.generation);
    }
    r.outputs.push_back(json_output("ensemble", "posterior-ensemble", ensemble_to_json(a)));
    r.outputs.push_back(csv_output("posterior_summary", posterior_summary_csv(a.ensemble)));
    return r;
}

JobResult run_simulate(const json& c, const JobContext& ctx) {
    const Resolved res = resolve_dataset_with_ref(c.at("dataset").get<std::string>(), ctx);
    const Dataset& ds = res.dataset;
    const ModelSetup setup = ds.setup();
    const int default_end = std::max(ds.observations.last_day(), ds.observations.hospital_last_day());
    const int end_day = static_cast<int>(int_field(c, "end_day", default_end, 1, 3650));
    JobResult r;
    if (c.contains("calibration")) {
        const CalibrationArtifact cal = ensemble_from_json(calibration_text(c.at("calibration").get<std::string>(), ctx));
        const auto n = static_cast<std::size_t>(int_field(c, "samples", 50, 1, 100000));
        const auto samples = bootstrap_resample(cal.ensemble, n, derive_seed(seed_field(c), 0x51D0ULL));
        std::vector<Trajectory> trajs(n);
        std::vector<std::vector<double>> rs(n);
        parallel_for(n, ctx.workers, [&](std::size_t k) {
            trajs[k] = setup.simulate(samples[k], end_day);
            rs[k] = r_trajectory(samples[k], ds.contacts, ds.mobility, ds.census, ds.lockdown_start_day, 0, end_day);
        });
        std::vector<BandPoint> hosp;
        std::vector<BandPoint> deaths;
        std::vector<BandPoint> rband;
        std::vector<double> col(n);
        for (int d = 0; d <= end_day; ++d) {
            const auto t = static_cast<std::size_t>(d);
            for (std::size_t k = 0; k < n; ++k) col[k] = trajs[k].hospital_total[t];
            hosp.push_back(band_of(d, col));
            for (std::size_t k = 0; k < n; ++k) {
                double s = 0.0;
                for (double x : trajs[k].daily_deaths[t]) s += x;
                col[k] = s;
            }
            deaths.push_back(band_of(d, col));
            for (std::size_t k = 0; k < n; ++k) col[k] = rs[k][t];
            rband.push_back(band_of(d, col));
        }
        r.outputs.push_back(csv_output("hospital_band", format_band_csv(hosp)));
        r.outputs.push_back(csv_output("deaths_band", format_band_csv(deaths)));
        r.outputs.push_back(csv_output("r_band", format_band_csv(rband)));
        return r;
    }
    const EpidemicParameters params = params_from(c);
    const Trajectory traj = setup.simulate(params, end_day);
    const auto rt = r_trajectory(params, ds.contacts, ds.mobility, ds.census, ds.lockdown_start_day, 0, end_day);
    std::vector<std::string> header{"day"};
    for (const auto& name : kCompartmentNames) header.emplace_back(name);
    for (const auto& h : {"hospital", "deaths", "R_t"}) header.emplace_back(h);
    CsvWriter w(header);
    for (int d = 0; d <= end_day; ++d) {
        const auto t = static_cast<std::size_t>(d);
        std::vector<double> row{static_cast<double>(d)};
        for (std::size_t comp = 0; comp < kCompartments; ++comp) {
            double s = 0.0;
            for (double x : traj.states[t].values[comp]) s += x;
            row.push_back(s);
        }
        double deaths = 0.0;
        for (double x : traj.daily_deaths[t]) deaths += x;
        row.push_back(traj.hospital_total[t]);
        row.push_back(deaths);
        row.push_back(rt[t]);
        w.add_numeric_row(row);
    }
    r.outputs.push_back(csv_output("trajectory", w.str()));
    return r;
}

JobResult run_optimization(const json& c, bool receding, const JobContext& ctx) {
    const Resolved res = resolve_dataset_with_ref(c.at("dataset").get<std::string>(), ctx);
    const std::string cal_text = calibration_text(c.at("calibration").get<std::string>(), ctx);
    const CalibrationArtifact cal = ensemble_from_json(cal_text);
    OptimizationArtifact a;
    a.config = optimization_config_from(c, receding, ctx.workers);
    a.weights = weights_from(c);
    a.bounds = bounds_from(c);
    a.t0 = static_cast<int>(int_field(c, "t0", observed_last_day(cal), 0, 3650));
    a.calibration_ref = sha256_hex(cal_text);
    a.dataset_ref = res.dataset_ref;
    const ControlProblem problem = prepare_control_problem(cal.ensemble, res.dataset.setup(), a.t0,
                                                           a.config.n_posterior_samples, a.config.seed, ctx.workers);
    a.result = nmpc_run(problem, a.weights, a.bounds, a.config, {nmpc_progress(ctx, 0.0, 1.0), ctx.cancelled});
    JobResult r;
    r.outputs = optimization_outputs(a);
    if (a.result.cancelled) {
        r.cancelled = true;
        r.message = "cancelled after " + std::to_string(a.result.applied.size()) + " applied days";
    }
    return r;
}

JobResult run_dynamic_update(const json& c, const JobContext& ctx) {
    const Resolved res = resolve_dataset_with_ref(c.at("dataset").get<std::string>(), ctx);
    const std::string prev_text = calibration_text(c.at("calibration").get<std::string>(), ctx);
    const CalibrationArtifact previous = ensemble_from_json(prev_text);
    const std::string prev_ref = sha256_hex(prev_text);
    const PmcConfig pmc = pmc_config_from(c, ctx.workers);
    OptimizationArtifact a;
    a.config = optimization_config_from(c, true, ctx.workers);
    a.weights = weights_from(c);
    a.bounds = bounds_from(c);
    DynamicUpdateResult u = dynamic_update(previous, prev_ref, res.dataset.observations, res.dataset.setup(), pmc,
                                           a.weights, a.bounds, a.config, {pmc_progress(ctx, 0.0, 0.5), ctx.cancelled},
                                           {nmpc_progress(ctx, 0.5, 1.0), ctx.cancelled});
    u.calibration.dataset_ref = res.dataset_ref;
    JobResult r;
    if (u.calibration.ensemble.status == EnsembleStatus::Cancelled) {
        r.cancelled = true;
        r.message = "dynamic update cancelled during re-calibration";
        return r;
    }
    const std::string cal_json = ensemble_to_json(u.calibration);
    a.t0 = u.problem.t0;
    a.calibration_ref = sha256_hex(cal_json);
    a.dataset_ref = res.dataset_ref;
    a.previous_ref = prev_ref;
    a.result = std::move(u.nmpc);
    r.outputs.push_back(json_output("ensemble", "posterior-ensemble", cal_json));
    r.outputs.push_back(csv_output("posterior_summary", posterior_summary_csv(u.calibration.ensemble)));
    for (auto& o : optimization_outputs(a)) r.outputs.push_back(std::move(o));
    if (a.result.cancelled) {
        r.cancelled = true;
        r.message = "dynamic update cancelled after " + std::to_string(a.result.applied.size()) + " applied days";
    }
    return r;
}

}  // namespace

Dataset resolve_dataset(const std::string& reference, const JobContext& context) {
    return resolve_dataset_with_ref(reference, context).dataset;
}

CalibrationArtifact resolve_calibration(const std::string& reference, const JobContext& context) {
    return ensemble_from_json(calibration_text(reference, context));
}

void validate_job_config(JobKind kind, const json& c, const JobContext& ctx) {
    check_schema(kind, c);
    switch (kind) {
        case JobKind::Ingest:
            if (c.contains("preset") && !find_preset(c.at("preset").get<std::string>())) {
                throw FieldError("config.preset", "unknown preset '" + c.at("preset").get<std::string>() + "'");
            }
            if (!c.contains("region") && !c.contains("preset")) {
                throw FieldError("config.region", "is required when no preset is given");
            }
            for (const auto& key : {"epidemic_start", "lockdown_start", "school_closure"}) date_field(c, key, Date{});
            for (const auto& key : {"mobility_csv", "deaths_csv", "hospital_csv", "contacts", "census"}) {
                check_reference_exists(c, key, false, ctx);
            }
            break;
        case JobKind::Calibrate:
            pmc_config_from(c, 0);
            prior_from_config(c);
            check_reference_exists(c, "dataset", true, ctx);
            break;
        case JobKind::Simulate:
            params_from(c);
            int_field(c, "samples", 50, 1, 100000);
            int_field(c, "end_day", 1, 1, 3650);
            seed_field(c);
            check_reference_exists(c, "dataset", true, ctx);
            check_reference_exists(c, "calibration", false, ctx);
            break;
        case JobKind::Optimize:
        case JobKind::Nmpc:
        case JobKind::DynamicUpdate:
            optimization_config_from(c, kind != JobKind::Optimize, 0);
            weights_from(c);
            bounds_from(c);
            if (kind == JobKind::DynamicUpdate) pmc_config_from(c, 0);
            int_field(c, "t0", 0, 0, 3650);
            check_reference_exists(c, "dataset", true, ctx);
            check_reference_exists(c, "calibration", false, ctx);
            break;
    }
}

JobResult run_job(JobKind kind, const json& config, const JobContext& context) {
    validate_job_config(kind, config, context);
    switch (kind) {
        case JobKind::Ingest: return run_ingest(config, context);
        case JobKind::Calibrate: return run_calibrate(config, context);
        case JobKind::Simulate: return run_simulate(config, context);
        case JobKind::Optimize: return run_optimization(config, false, context);
        case JobKind::Nmpc: return run_optimization(config, true, context);
        case JobKind::DynamicUpdate: return run_dynamic_update(config, context);
    }
    return {};
}

std::string format_posterior_table(const PosteriorEnsemble& ensemble) {
    const auto s = posterior_summary(ensemble);
    std::string out = "parameter      mean          std\n";
    const auto& names = EpidemicParameters::names();
    char line[96];
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::snprintf(line, sizeof line, "%-12s %12.4g %12.4g\n", names[i].c_str(), s.mean[i], s.std[i]);
        out += line;
    }
    return out;
}

}  // namespace epicontrol
