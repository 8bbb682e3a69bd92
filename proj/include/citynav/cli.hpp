#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "citynav/eval.hpp"

namespace citynav {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace cli_detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << bytes;
}

// JSON config file: presets for every flag the command line left untouched.
struct Preset {
    json cfg = json::object();

    void load(const std::string& path) {
        if (path.empty()) return;
        try {
            cfg = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw ValidationError("config file " + path + ": " + e.what());
        }
        if (!cfg.is_object()) throw ValidationError("config file " + path + " must hold a JSON object");
    }

    template <typename T>
    void apply(const CLI::Option* opt, const char* key, T& var) const {
        if (opt->count() > 0 || !cfg.contains(key)) return;
        try {
            var = cfg.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ValidationError(std::string("config key '") + key + "': " + e.what());
        }
    }
};

inline void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

struct RunOpts {
    std::string env_path;
    std::string tasks_path;
    std::vector<std::string> agents{"prep"};
    std::string perception = "oracle";
    std::string backend = "scripted";
    std::string transcript;
    std::string record;
    std::string model;
    double temperature = 0.0;
    double distance_sigma = -1.0;  // <0: keep profile default
    double bearing_quant = -1.0;   // <0: keep profile default
    std::uint64_t seed = 0;
    int parallelism = 1;
    int retries = 2;
    std::string out_dir = "out";
};

inline int do_run(const RunOpts& opts) {
    std::vector<std::string> warnings;
    const EnvGraph env = load_env(read_file(opts.env_path), &warnings);
    const std::vector<Task> tasks = load_tasks(read_file(opts.tasks_path));

    BatchConfig bc;
    bc.kinds.clear();
    for (const auto& name : opts.agents) {
        const auto kind = parse_agent_kind(name);
        if (!kind) throw UsageError("unknown agent kind: " + name);
        bc.kinds.push_back(*kind);
    }

    std::optional<VisionClient> vision;
    if (opts.perception == "remote") {
        vision = VisionClient::from_env();
        if (!vision) throw ValidationError("remote perception requires NAV_VLM_ENDPOINT");
        bc.vision = &*vision;
    } else {
        const auto kind = parse_profile_kind(opts.perception);
        if (!kind) throw UsageError("unknown perception profile: " + opts.perception);
        const double vr = *kind == ProfileKind::oracle ? 0.5 : visible_pair_fraction(env);
        bc.profile = profile_from_table(*kind, vr, &warnings);
        if (opts.distance_sigma >= 0.0) bc.profile.distance_noise_sigma = opts.distance_sigma;
        if (opts.bearing_quant > 0.0) bc.profile.bearing_quantization_deg = opts.bearing_quant;
    }

    std::optional<ReplayBackend> replay;
    std::optional<RemoteBackend> remote;
    std::optional<ScriptedBackend> scripted;
    std::optional<RecordingBackend> recording;
    if (opts.backend == "replay") {
        if (opts.transcript.empty()) throw UsageError("--backend replay requires --transcript");
        replay = ReplayBackend::from_jsonl(read_file(opts.transcript));
        bc.backend = &*replay;
    } else if (opts.backend == "remote") {
        if (opts.model.empty()) throw UsageError("--backend remote requires --model");
        remote = RemoteBackend::from_env(opts.model, opts.temperature);
        if (!remote) throw ValidationError("remote backend requires NAV_LM_ENDPOINT");
        bc.backend = &*remote;
        if (!opts.record.empty()) {
            recording.emplace(*remote);
            bc.backend = &*recording;
        }
    } else if (opts.backend == "scripted") {
        // recording needs prompt traffic, so route through the prompt-mode
        // scripted reasoner instead of the direct policies
        if (!opts.record.empty()) {
            scripted.emplace();
            recording.emplace(*scripted);
            bc.backend = &*recording;
        }
    } else {
        throw UsageError("unknown backend: " + opts.backend);
    }

    bc.seed = opts.seed;
    bc.parallelism = opts.parallelism;
    bc.reasoner_retries = opts.retries;
    bc.log_dir = (std::filesystem::path(opts.out_dir) / "logs").string();

    const BatchReport report = run_batch(env, tasks, bc);

    write_file((std::filesystem::path(opts.out_dir) / "report.csv").string(), rows_csv(report));
    const std::string table = render_markdown_table(report);
    write_file((std::filesystem::path(opts.out_dir) / "report.md").string(), table);
    if (recording) write_file(opts.record, recording->to_jsonl());

    print_warnings(warnings);
    std::cout << table;
    if (report.warnings > 0) {
        std::cerr << "warning: " << report.warnings << " episode(s) recorded failures\n";
    }
    return 0;
}

} // namespace cli_detail

inline int cli_main(int argc, const char* const* argv) {
    using cli_detail::Preset;
    using cli_detail::read_file;
    using cli_detail::write_file;

    CLI::App app{"city navigation workbench"};
    app.require_subcommand(1);

    // --- env-gen -----------------------------------------------------------
    auto* sc_envgen = app.add_subcommand("env-gen", "generate a synthetic environment");
    std::string eg_kind = "grid", eg_out, eg_config;
    SyntheticSpec eg_spec;
    auto* eg_kind_opt = sc_envgen->add_option("--kind", eg_kind)->check(CLI::IsMember({"grid", "radial"}));
    auto* eg_width_opt = sc_envgen->add_option("--width", eg_spec.width);
    auto* eg_height_opt = sc_envgen->add_option("--height", eg_spec.height);
    auto* eg_blocked_opt = sc_envgen->add_option("--blocked", eg_spec.blocked_fraction);
    auto* eg_lm_opt = sc_envgen->add_option("--landmarks", eg_spec.landmark_count);
    auto* eg_vis_opt = sc_envgen->add_option("--visible", eg_spec.target_visible_fraction);
    auto* eg_seed_opt = sc_envgen->add_option("--seed", eg_spec.seed);
    sc_envgen->add_option("-o,--out", eg_out)->required();
    sc_envgen->add_option("--config", eg_config);

    // --- env-validate ------------------------------------------------------
    auto* sc_envval = app.add_subcommand("env-validate", "validate an environment file");
    std::string ev_env;
    sc_envval->add_option("--env", ev_env)->required();

    // --- task-gen ----------------------------------------------------------
    auto* sc_taskgen = app.add_subcommand("task-gen", "sample navigation tasks");
    std::string tg_env, tg_out, tg_config;
    int tg_count = 100;
    double tg_mean = 30.0, tg_stddev = 10.0;
    std::uint64_t tg_seed = 0;
    sc_taskgen->add_option("--env", tg_env)->required();
    auto* tg_count_opt = sc_taskgen->add_option("--count", tg_count);
    auto* tg_mean_opt = sc_taskgen->add_option("--mean", tg_mean);
    auto* tg_stddev_opt = sc_taskgen->add_option("--stddev", tg_stddev);
    auto* tg_seed_opt = sc_taskgen->add_option("--seed", tg_seed);
    sc_taskgen->add_option("-o,--out", tg_out)->required();
    sc_taskgen->add_option("--config", tg_config);

    // --- run / replay ------------------------------------------------------
    cli_detail::RunOpts run_opts;
    std::string run_config;
    auto* sc_run = app.add_subcommand("run", "run an evaluation batch");
    sc_run->add_option("--env", run_opts.env_path)->required();
    sc_run->add_option("--tasks", run_opts.tasks_path)->required();
    auto* run_agent_opt = sc_run->add_option("--agent", run_opts.agents)->delimiter(',');
    auto* run_perc_opt = sc_run->add_option("--perception", run_opts.perception)
                             ->check(CLI::IsMember({"oracle", "finetuned", "zeroshot", "remote"}));
    auto* run_backend_opt = sc_run->add_option("--backend", run_opts.backend)
                                ->check(CLI::IsMember({"scripted", "replay", "remote"}));
    sc_run->add_option("--transcript", run_opts.transcript);
    sc_run->add_option("--record", run_opts.record);
    sc_run->add_option("--model", run_opts.model);
    sc_run->add_option("--temperature", run_opts.temperature);
    sc_run->add_option("--distance-sigma", run_opts.distance_sigma);
    sc_run->add_option("--bearing-quant", run_opts.bearing_quant);
    auto* run_seed_opt = sc_run->add_option("--seed", run_opts.seed);
    auto* run_par_opt = sc_run->add_option("--parallelism", run_opts.parallelism);
    sc_run->add_option("--retries", run_opts.retries);
    auto* run_out_opt = sc_run->add_option("--out", run_opts.out_dir);
    sc_run->add_option("--config", run_config);

    cli_detail::RunOpts rp_opts;
    auto* sc_replay = app.add_subcommand("replay", "re-run a batch against a recorded transcript");
    sc_replay->add_option("--env", rp_opts.env_path)->required();
    sc_replay->add_option("--tasks", rp_opts.tasks_path)->required();
    sc_replay->add_option("--agent", rp_opts.agents)->delimiter(',');
    sc_replay->add_option("--perception", rp_opts.perception)
        ->check(CLI::IsMember({"oracle", "finetuned", "zeroshot"}));
    sc_replay->add_option("--transcript", rp_opts.transcript)->required();
    sc_replay->add_option("--seed", rp_opts.seed);
    sc_replay->add_option("--parallelism", rp_opts.parallelism);
    sc_replay->add_option("--out", rp_opts.out_dir);

    // --- report ------------------------------------------------------------
    auto* sc_report = app.add_subcommand("report", "render a report from episode logs");
    std::string rep_in, rep_format = "table", rep_out;
    sc_report->add_option("--in", rep_in)->required();
    sc_report->add_option("--format", rep_format)->check(CLI::IsMember({"table", "csv"}));
    sc_report->add_option("-o,--out", rep_out);

    // --- sweep -------------------------------------------------------------
    auto* sc_sweep = app.add_subcommand("sweep", "bin episode outcomes by difficulty or visibility");
    std::string sw_in, sw_by = "distance", sw_env, sw_out;
    sc_sweep->add_option("--in", sw_in)->required();
    sc_sweep->add_option("--by", sw_by)->check(CLI::IsMember({"distance", "visibility"}));
    sc_sweep->add_option("--env", sw_env);
    sc_sweep->add_option("-o,--out", sw_out);

    try {
        app.parse(argc, argv);

        if (sc_envgen->parsed()) {
            Preset p;
            p.load(eg_config);
            p.apply(eg_kind_opt, "kind", eg_kind);
            p.apply(eg_width_opt, "width", eg_spec.width);
            p.apply(eg_height_opt, "height", eg_spec.height);
            p.apply(eg_blocked_opt, "blocked", eg_spec.blocked_fraction);
            p.apply(eg_lm_opt, "landmarks", eg_spec.landmark_count);
            p.apply(eg_vis_opt, "visible", eg_spec.target_visible_fraction);
            p.apply(eg_seed_opt, "seed", eg_spec.seed);
            eg_spec.kind = eg_kind == "radial" ? SyntheticKind::radial : SyntheticKind::grid;
            std::vector<std::string> warnings;
            const EnvGraph env = gen_synthetic(eg_spec, &warnings);
            write_file(eg_out, serialize_env(env));
            cli_detail::print_warnings(warnings);
            std::cout << "wrote " << env.node_ids().size() << " nodes, " << env.landmarks().size()
                      << " landmarks to " << eg_out << "\n";
            return 0;
        }
        if (sc_envval->parsed()) {
            std::vector<std::string> warnings;
            const EnvGraph env = load_env(read_file(ev_env), &warnings);
            cli_detail::print_warnings(warnings);
            std::cout << "ok: " << env.node_ids().size() << " nodes, " << env.landmarks().size()
                      << " landmarks\n";
            return 0;
        }
        if (sc_taskgen->parsed()) {
            Preset p;
            p.load(tg_config);
            p.apply(tg_count_opt, "count", tg_count);
            p.apply(tg_mean_opt, "mean", tg_mean);
            p.apply(tg_stddev_opt, "stddev", tg_stddev);
            p.apply(tg_seed_opt, "seed", tg_seed);
            std::vector<std::string> warnings;
            const EnvGraph env = load_env(read_file(tg_env), &warnings);
            const auto tasks = sample_tasks(env, tg_count, tg_mean, tg_stddev, tg_seed);
            write_file(tg_out, serialize_tasks(tasks));
            cli_detail::print_warnings(warnings);
            std::cout << "wrote " << tasks.size() << " tasks to " << tg_out << "\n";
            return 0;
        }
        if (sc_run->parsed()) {
            Preset p;
            p.load(run_config);
            p.apply(run_agent_opt, "agent", run_opts.agents);
            p.apply(run_perc_opt, "perception", run_opts.perception);
            p.apply(run_backend_opt, "backend", run_opts.backend);
            p.apply(run_seed_opt, "seed", run_opts.seed);
            p.apply(run_par_opt, "parallelism", run_opts.parallelism);
            p.apply(run_out_opt, "out", run_opts.out_dir);
            return cli_detail::do_run(run_opts);
        }
        if (sc_replay->parsed()) {
            rp_opts.backend = "replay";
            return cli_detail::do_run(rp_opts);
        }
        if (sc_report->parsed()) {
            const BatchReport report = report_from_logs(rep_in);
            const std::string text = rep_format == "csv" ? rows_csv(report) : render_markdown_table(report);
            if (rep_out.empty()) {
                std::cout << text;
            } else {
                write_file(rep_out, text);
            }
            return 0;
        }
        if (sc_sweep->parsed()) {
            const BatchReport report = report_from_logs(sw_in);
            std::string text;
            if (sw_by == "visibility") {
                if (sw_env.empty()) throw UsageError("sweep --by visibility requires --env");
                const EnvGraph env = load_env(read_file(sw_env), nullptr);
                text = visibility_sweep_csv(sweep_by_visibility(report, env));
            } else {
                text = distance_sweep_csv(sweep_by_distance(report));
            }
            if (sw_out.empty()) {
                std::cout << text;
            } else {
                write_file(sw_out, text);
            }
            return 0;
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

} // namespace citynav
