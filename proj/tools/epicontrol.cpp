// epicontrol: batch front-end for ingestion, calibration, simulation, R(t),
// lockdown optimisation, dynamic updates and the HTTP job service.
//
// Exit codes: 0 success, 2 invalid input, 3 runtime or numeric failure.

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "epicontrol/csv_format.hpp"
#include "epicontrol/data_files.hpp"
#include "epicontrol/dataset.hpp"
#include "epicontrol/ensemble_io.hpp"
#include "epicontrol/error.hpp"
#include "epicontrol/http_api.hpp"
#include "epicontrol/jobs.hpp"
#include "epicontrol/mobility.hpp"
#include "epicontrol/pipeline.hpp"
#include "epicontrol/repro.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace epicontrol;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

fs::path data_root() {
    if (const char* env = std::getenv("EPICONTROL_DATA_DIR"); env && *env) return env;
    return ".";
}

// Relative paths are tried against the working directory first, then the data root.
std::string locate(const std::string& p) {
    const fs::path path(p);
    if (path.is_absolute() || fs::exists(path)) return fs::absolute(path).string();
    return fs::absolute(data_root() / path).string();
}

void write_outputs(const JobResult& result, const fs::path& out) {
    fs::create_directories(out);
    for (const auto& o : result.outputs) {
        write_text_file(out / o.filename, o.content);
        std::cerr << "wrote " << (out / o.filename).string() << "\n";
    }
}

JobContext cli_context(int workers) {
    JobContext ctx;
    ctx.data_dir = data_root();
    ctx.workers = workers;
    ctx.progress = [](double fraction, const json& detail) {
        std::cerr << "\rprogress " << static_cast<int>(fraction * 100.0) << "% " << detail.dump() << "    " << std::flush;
    };
    return ctx;
}

struct NmpcFlags {
    std::string dataset;
    std::string ensemble;
    double eps_school = 100.0;
    double eps_work = 100.0;
    double eps_other = 100.0;
    int horizon = 90;
    int pred_horizon = 30;
    int blocks = 10;
    int samples = 50;
    int budget = 2000;
    double h_max = 10000.0;
    int replan_every = 1;
    std::optional<int> t0;
    std::vector<double> bounds_school;
    std::vector<double> bounds_work;
    std::vector<double> bounds_other;
};

void add_nmpc_flags(CLI::App* cmd, NmpcFlags& f, bool one_shot) {
    cmd->add_option("--dataset", f.dataset, "Dataset directory")->required();
    cmd->add_option("--ensemble", f.ensemble, "Calibration artifact (ensemble.json)")->required();
    cmd->add_option("--eps-school", f.eps_school, "Economic weight of school closures")->capture_default_str();
    cmd->add_option("--eps-work", f.eps_work, "Economic weight of work restrictions")->capture_default_str();
    cmd->add_option("--eps-other", f.eps_other, "Economic weight of other restrictions")->capture_default_str();
    cmd->add_option("--horizon", f.horizon, "Control horizon T_h in days")->capture_default_str();
    if (!one_shot) {
        cmd->add_option("--pred-horizon", f.pred_horizon, "Prediction horizon T_opt in days")->capture_default_str();
        cmd->add_option("--replan-every", f.replan_every, "Days applied between re-optimisations")->capture_default_str();
    }
    cmd->add_option("--blocks", f.blocks, "Block length in days of the piecewise-constant controls")->capture_default_str();
    cmd->add_option("--samples", f.samples, "Posterior samples in the expected cost")->capture_default_str();
    cmd->add_option("--budget", f.budget, "Objective evaluations per optimisation")->capture_default_str();
    cmd->add_option("--h-max", f.h_max, "Hospital capacity")->capture_default_str();
    cmd->add_option("--t0", f.t0, "First controlled day (default: last calibrated day)");
    cmd->add_option("--bounds-school", f.bounds_school, "lower,upper")->delimiter(',')->expected(2);
    cmd->add_option("--bounds-work", f.bounds_work, "lower,upper")->delimiter(',')->expected(2);
    cmd->add_option("--bounds-other", f.bounds_other, "lower,upper")->delimiter(',')->expected(2);
}

json nmpc_config(const NmpcFlags& f, bool one_shot, std::uint64_t seed) {
    json c{{"dataset", locate(f.dataset)},
           {"calibration", locate(f.ensemble)},
           {"eps_school", f.eps_school},
           {"eps_work", f.eps_work},
           {"eps_other", f.eps_other},
           {"horizon", f.horizon},
           {"prediction_horizon", one_shot ? f.horizon : f.pred_horizon},
           {"block_length", f.blocks},
           {"samples", f.samples},
           {"budget", f.budget},
           {"h_max", f.h_max},
           {"seed", seed}};
    if (!one_shot) c["replan_every"] = f.replan_every;
    if (f.t0) c["t0"] = *f.t0;
    json bounds = json::object();
    if (!f.bounds_school.empty()) bounds["school"] = f.bounds_school;
    if (!f.bounds_work.empty()) bounds["work"] = f.bounds_work;
    if (!f.bounds_other.empty()) bounds["other"] = f.bounds_other;
    if (!bounds.empty()) c["bounds"] = bounds;
    return c;
}

json params_object(const std::vector<std::string>& assignments) {
    json p = json::object();
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw ValidationError("--param expects name=value, got '" + a + "'");
        try {
            p[a.substr(0, eq)] = std::stod(a.substr(eq + 1));
        } catch (const std::exception&) {
            throw ValidationError("--param " + a + ": value is not a number");
        }
    }
    return p;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mobility-driven epidemic calibration and lockdown optimisation"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    int workers = 0;
    std::string out = ".";
    app.add_option("--seed", seed, "Master random seed")->capture_default_str();
    app.add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Normalise raw mobility and health CSVs into a dataset directory");
    std::string mobility_csv, deaths_csv, hospital_csv, region, preset, contacts, census, lockdown_start, school_closure;
    ingest->add_option("--mobility", mobility_csv, "Google community mobility report CSV")->required();
    ingest->add_option("--deaths", deaths_csv, "Deaths CSV (date,age_band,count)")->required();
    ingest->add_option("--hospital", hospital_csv, "Hospital occupancy CSV (date,occupancy)")->required();
    ingest->add_option("--contacts", contacts, "Contact matrix file")->required();
    ingest->add_option("--census", census, "Census file")->required();
    ingest->add_option("--region", region, "Mobility region (country code, country or sub-region name)");
    ingest->add_option("--preset", preset, "Country preset: england or france");
    ingest->add_option("--lockdown-start", lockdown_start, "Lockdown date (YYYY-MM-DD)");
    ingest->add_option("--school-closure", school_closure, "School closure date (YYYY-MM-DD)");
    ingest->add_option("--out", out, "Output dataset directory")->required();

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Run PMC-ABC and write the posterior ensemble");
    std::string dataset, prior_config;
    int generations = 3, particles = 100;
    double quantile_q = 0.5;
    std::optional<int> last_day;
    calibrate->add_option("--dataset", dataset, "Dataset directory")->required();
    calibrate->add_option("--prior-config", prior_config, "Prior JSON (list of marginals or per-parameter overrides)");
    calibrate->add_option("--generations", generations, "PMC generations")->capture_default_str();
    calibrate->add_option("--particles", particles, "Particles per generation")->capture_default_str();
    calibrate->add_option("--quantile", quantile_q, "Tolerance quantile")->capture_default_str();
    calibrate->add_option("--last-day", last_day, "Calibrate on observations up to this day");
    calibrate->add_option("--out", out, "Output directory")->required();

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Simulate historical dynamics");
    std::string ensemble;
    std::vector<std::string> params;
    int samples = 50;
    std::optional<int> end_day;
    simulate->add_option("--dataset", dataset, "Dataset directory")->required();
    simulate->add_option("--ensemble", ensemble, "Calibration artifact; produces bands over posterior samples");
    simulate->add_option("--param", params, "Parameter override name=value (repeatable)");
    simulate->add_option("--samples", samples, "Posterior samples for bands")->capture_default_str();
    simulate->add_option("--end-day", end_day, "Last simulated day");
    simulate->add_option("--out", out, "Output directory")->required();

    // r
    auto* rcmd = app.add_subcommand("r", "Reproduction number R(t) under historical mobility");
    int first_day = 0;
    rcmd->add_option("--dataset", dataset, "Dataset directory")->required();
    rcmd->add_option("--param", params, "Parameter override name=value (repeatable)");
    rcmd->add_option("--first-day", first_day, "First day")->capture_default_str();
    rcmd->add_option("--last-day", last_day, "Last day (default: end of the mobility series)");
    rcmd->add_option("--out", out, "Output directory")->required();

    // optimize / nmpc
    NmpcFlags opt_flags, nmpc_flags;
    auto* optimize = app.add_subcommand("optimize", "One-shot optimisation over the whole horizon");
    add_nmpc_flags(optimize, opt_flags, true);
    optimize->add_option("--out", out, "Output directory")->required();
    auto* nmpc = app.add_subcommand("nmpc", "Receding-horizon lockdown optimisation");
    add_nmpc_flags(nmpc, nmpc_flags, false);
    nmpc->add_option("--out", out, "Output directory")->required();

    // update
    NmpcFlags upd_flags;
    auto* update = app.add_subcommand("update", "Re-calibrate on extended data and re-run the NMPC loop");
    add_nmpc_flags(update, upd_flags, false);
    update->add_option("--generations", generations, "PMC generations")->capture_default_str();
    update->add_option("--particles", particles, "Particles per generation")->capture_default_str();
    update->add_option("--out", out, "Output directory")->required();

    // synthesize
    auto* synth = app.add_subcommand("synthesize", "Write model-generated deaths and hospital CSVs in the raw input formats");
    int hospital_first_day = 17;
    synth->add_option("--mobility", mobility_csv, "Google community mobility report CSV")->required();
    synth->add_option("--contacts", contacts, "Contact matrix file")->required();
    synth->add_option("--census", census, "Census file")->required();
    synth->add_option("--region", region, "Mobility region");
    synth->add_option("--preset", preset, "Country preset: england or france");
    synth->add_option("--param", params, "Parameter override name=value (repeatable)");
    synth->add_option("--last-day", last_day, "Last simulated day")->required();
    synth->add_option("--hospital-first-day", hospital_first_day, "First day with hospital data")->capture_default_str();
    synth->add_option("--out", out, "Output directory")->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP job service");
    std::string state_dir = "epicontrol-state", host = "127.0.0.1";
    int port = 8080, job_slots = 1;
    serve->add_option("--state-dir", state_dir, "Job index and artifact store")->capture_default_str();
    serve->add_option("--host", host, "Bind address")->capture_default_str();
    serve->add_option("--port", port, "Port")->capture_default_str();
    serve->add_option("--job-slots", job_slots, "Jobs run concurrently")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        const JobContext ctx = cli_context(workers);
        if (*ingest) {
            json c{{"mobility_csv", locate(mobility_csv)}, {"deaths_csv", locate(deaths_csv)},
                   {"hospital_csv", locate(hospital_csv)}, {"contacts", locate(contacts)}, {"census", locate(census)}};
            if (!region.empty()) c["region"] = region;
            if (!preset.empty()) c["preset"] = preset;
            if (!lockdown_start.empty()) c["lockdown_start"] = lockdown_start;
            if (!school_closure.empty()) c["school_closure"] = school_closure;
            const JobResult r = run_job(JobKind::Ingest, c, ctx);
            const Dataset ds = dataset_from_bundle(r.outputs.at(0).content);
            write_dataset(ds, out);
            write_text_file(fs::path(out) / "ingest_report.json", r.outputs.at(1).content);
            std::cout << r.outputs.at(1).content;
        } else if (*calibrate) {
            json c{{"dataset", locate(dataset)}, {"generations", generations}, {"particles", particles},
                   {"quantile", quantile_q}, {"seed", seed}};
            if (!prior_config.empty()) {
                c["prior"] = json::parse(read_text_file(locate(prior_config)), nullptr, false);
                if (c["prior"].is_discarded()) throw ValidationError(prior_config + " is not valid JSON");
            }
            if (last_day) c["last_day"] = *last_day;
            const JobResult r = run_job(JobKind::Calibrate, c, ctx);
            std::cerr << "\n";
            if (r.cancelled) throw NumericError(r.message);
            write_outputs(r, out);
            if (!r.message.empty()) std::cerr << "warning: " << r.message << "\n";
            const CalibrationArtifact a = ensemble_from_json(r.outputs.at(0).content);
            std::cout << format_posterior_table(a.ensemble);
        } else if (*simulate) {
            json c{{"dataset", locate(dataset)}, {"samples", samples}, {"seed", seed}};
            if (!ensemble.empty()) c["calibration"] = locate(ensemble);
            if (!params.empty()) c["params"] = params_object(params);
            if (end_day) c["end_day"] = *end_day;
            write_outputs(run_job(JobKind::Simulate, c, ctx), out);
        } else if (*rcmd) {
            const Dataset ds = load_dataset(locate(dataset));
            json c{{"dataset", locate(dataset)}, {"params", params_object(params)}};
            validate_job_config(JobKind::Simulate, c, ctx);
            EpidemicParameters p;
            auto v = p.to_vector();
            const auto& names = EpidemicParameters::names();
            for (const auto& [key, value] : c["params"].items()) {
                v[static_cast<std::size_t>(std::find(names.begin(), names.end(), key) - names.begin())] = value.get<double>();
            }
            p = EpidemicParameters::from_vector(v);
            const int last = last_day ? *last_day : ds.mobility.last_day();
            const auto rt = r_trajectory(p, ds.contacts, ds.mobility, ds.census, ds.lockdown_start_day, first_day, last);
            CsvWriter w({"day", "R"});
            for (int d = first_day; d <= last; ++d) {
                w.add_numeric_row({static_cast<double>(d), rt[static_cast<std::size_t>(d - first_day)]});
            }
            fs::create_directories(out);
            write_text_file(fs::path(out) / "r.csv", w.str());
        } else if (*optimize || *nmpc) {
            const bool one_shot = static_cast<bool>(*optimize);
            const json c = nmpc_config(one_shot ? opt_flags : nmpc_flags, one_shot, seed);
            const JobResult r = run_job(one_shot ? JobKind::Optimize : JobKind::Nmpc, c, ctx);
            std::cerr << "\n";
            write_outputs(r, out);
        } else if (*update) {
            json c = nmpc_config(upd_flags, false, seed);
            c["generations"] = generations;
            c["particles"] = particles;
            const JobResult r = run_job(JobKind::DynamicUpdate, c, ctx);
            std::cerr << "\n";
            write_outputs(r, out);
        } else if (*synth) {
            const auto pre = preset.empty() ? find_preset("england") : find_preset(preset);
            if (!pre) throw ValidationError("unknown preset '" + preset + "'");
            MobilityPipelineConfig mc;
            mc.epidemic_start = pre->epidemic_start;
            mc.school_closure = pre->school_closure;
            const auto raw = parse_mobility_csv(locate(mobility_csv), region.empty() ? pre->region : region);
            ModelSetup setup{load_contact_matrices(locate(contacts)), load_census(locate(census)),
                             build_mobility_series(raw, mc), days_between(pre->epidemic_start, pre->lockdown_start)};
            json c{{"params", params_object(params)}};
            EpidemicParameters p;
            auto v = p.to_vector();
            const auto& names = EpidemicParameters::names();
            for (const auto& [key, value] : c["params"].items()) {
                const auto it = std::find(names.begin(), names.end(), key);
                if (it == names.end()) throw ValidationError("unknown parameter '" + key + "'");
                v[static_cast<std::size_t>(it - names.begin())] = value.get<double>();
            }
            p = EpidemicParameters::from_vector(v);
            p.validate();
            const Trajectory traj = setup.simulate(p, *last_day);
            CsvWriter deaths({"date", "age_band", "count"});
            CsvWriter hosp({"date", "occupancy"});
            for (int d = 1; d <= *last_day; ++d) {
                const std::string date = format_date(add_days(pre->epidemic_start, d));
                for (std::size_t g = 0; g < kAgeGroups; ++g) {
                    deaths.add_row({date, std::string(kAgeBandLabels[g]), format_number(std::round(traj.deaths_on(d)[g]))});
                }
                if (d >= hospital_first_day) hosp.add_row({date, format_number(std::round(traj.hospital_on(d)))});
            }
            fs::create_directories(out);
            write_text_file(fs::path(out) / "deaths.csv", deaths.str());
            write_text_file(fs::path(out) / "hospital.csv", hosp.str());
        } else if (*serve) {
            JobServiceConfig sc;
            sc.state_dir = state_dir;
            sc.data_dir = data_root();
            sc.workers = workers;
            sc.job_slots = job_slots;
            sc.default_seed = seed;
            JobService service(sc);
            HttpApi api(service);
            static HttpApi* active = &api;
            std::signal(SIGINT, [](int) { g_stop = 1; active->stop(); });
            std::signal(SIGTERM, [](int) { g_stop = 1; active->stop(); });
            std::cerr << "listening on http://" << host << ":" << port << "/v1\n";
            if (!api.listen(host, port) && !g_stop) throw Error("cannot bind " + host + ":" + std::to_string(port));
        }
    } catch (const ValidationError& e) {
        std::cerr << "\nerror: " << e.what() << "\n";
        return kExitValidation;
    } catch (const StructuralError& e) {
        std::cerr << "\nerror: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NotFoundError& e) {
        std::cerr << "\nerror: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ConflictError& e) {
        std::cerr << "\nerror: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "\nerror: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
