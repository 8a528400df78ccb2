// SPDX-License-Identifier: Apache-2.0
// Command-line front end: generate, train, evaluate, compare, bench-latency.
#include "iotsched/iotsched.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

namespace {

using iotsched::ConfigError;
using nlohmann::json;

struct CommonArgs {
    std::string config_file;
    std::string preset_name;
    std::string out_dir = "run";
    std::vector<std::string> sets;
    // Named flags; each maps onto one JSON path.
    std::optional<std::string> tech, scheduler, reward_mode;
    std::optional<bool> fading;
    std::optional<int> cells, devices_per_cell, sc_count, timeslots, omega_train, omega_test, jobs;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& a)
{
    cmd->add_option("--config", a.config_file, "JSON configuration file");
    cmd->add_option("--preset", a.preset_name, "paper or tiny");
    cmd->add_option("--out", a.out_dir, "run directory")->capture_default_str();
    cmd->add_option("--set", a.sets, "override one JSON path, e.g. --set hyper.lr_a=1e-3");
    cmd->add_option("--tech", a.tech, "nb-iot, lte-m, 5g-nr or mixed");
    cmd->add_option("--scheduler", a.scheduler, "scheduler name, e.g. ddpgn_ia");
    cmd->add_option("--reward-mode", a.reward_mode, "edge or centralized");
    cmd->add_option("--fading", a.fading, "small-scale fading on or off");
    cmd->add_option("--cells", a.cells);
    cmd->add_option("--devices-per-cell", a.devices_per_cell);
    cmd->add_option("--sc-count", a.sc_count);
    cmd->add_option("--timeslots", a.timeslots);
    cmd->add_option("--omega-train", a.omega_train);
    cmd->add_option("--omega-test", a.omega_test);
    cmd->add_option("--seed", a.seed);
    cmd->add_option("--jobs", a.jobs, "worker threads for per-realization work");
}

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void merge(json& dst, const json& src)
{
    for (auto it = src.begin(); it != src.end(); ++it) {
        if (it->is_object() && dst.contains(it.key()) && dst[it.key()].is_object()) {
            merge(dst[it.key()], *it);
        } else {
            dst[it.key()] = *it;
        }
    }
}

iotsched::RunConfig resolve(const CommonArgs& a)
{
    iotsched::RunConfig base;
    json doc = json::object();
    if (!a.config_file.empty()) {
        doc = read_json_file(a.config_file);
    }
    if (!a.preset_name.empty()) {
        doc["preset"] = a.preset_name;
    }
    if (doc.contains("preset")) {
        base = iotsched::preset(doc["preset"].get<std::string>());
        doc.erase("preset");
    }
    json full = iotsched::config_to_json(base);
    merge(full, doc);
    auto put = [&](const char* path, const auto& v) {
        if (v) {
            full[path] = *v;
        }
    };
    put("tech", a.tech);
    put("scheduler", a.scheduler);
    put("reward_mode", a.reward_mode);
    put("fading", a.fading);
    put("cells", a.cells);
    put("devices_per_cell", a.devices_per_cell);
    put("sc_count", a.sc_count);
    put("timeslots", a.timeslots);
    put("omega_train", a.omega_train);
    put("omega_test", a.omega_test);
    put("seed", a.seed);
    put("jobs", a.jobs);
    for (const auto& s : a.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects path=value, got '" + s + "'");
        }
        iotsched::apply_override(full, s.substr(0, eq), s.substr(eq + 1));
    }
    auto cfg = iotsched::config_from_json(full, base);
    iotsched::validate(cfg);
    return cfg;
}

void print_summary(const iotsched::ExperimentResult& res)
{
    std::cout << std::setw(2) << res.summary << '\n';
}

int exit_for(const iotsched::ExperimentResult& res)
{
    if (res.solver_infeasible > 0) {
        std::cerr << "solver infeasible on " << res.solver_infeasible << " of " << res.solver_solves
                  << " solves\n";
        return 3;
    }
    return 0;
}

int cmd_generate(const CommonArgs& a, int limit)
{
    const auto cfg = resolve(a);
    const std::filesystem::path out = a.out_dir;
    std::filesystem::create_directories(out / "realizations");
    {
        std::ofstream f(out / "config.json");
        f << std::setw(2) << iotsched::config_to_json(cfg) << '\n';
    }
    for (auto split : {iotsched::Split::Train, iotsched::Split::Test}) {
        const int n = split == iotsched::Split::Train ? cfg.omega_train : cfg.omega_test;
        const char* tag = split == iotsched::Split::Train ? "train" : "test";
        for (int k = 0; k < std::min(n, limit); ++k) {
            const auto r = iotsched::make_realization(cfg, split, k);
            std::ofstream f(out / "realizations" / (std::string(tag) + "_" + std::to_string(k) + ".json"));
            f << iotsched::realization_to_json(r) << '\n';
        }
    }
    std::cout << "wrote realizations to " << (out / "realizations").string() << '\n';
    return 0;
}

int cmd_train(const CommonArgs& a, bool no_test, bool latency)
{
    auto cfg = resolve(a);
    if (no_test) {
        cfg.run_test = false;
    }
    if (latency) {
        cfg.record_latency = true;
    }
    const auto res = iotsched::run_experiment(cfg, std::filesystem::path(a.out_dir));
    print_summary(res);
    return exit_for(res);
}

int cmd_evaluate(const CommonArgs& a, const std::string& checkpoints)
{
    const auto cfg = resolve(a);
    const std::filesystem::path ck =
        checkpoints.empty() ? std::filesystem::path(a.out_dir) / "checkpoints" : std::filesystem::path(checkpoints);
    const auto res = iotsched::evaluate_checkpoints(cfg, ck, std::filesystem::path(a.out_dir) / "evaluation");
    print_summary(res);
    return 0;
}

int cmd_compare(const CommonArgs& a, const std::vector<std::string>& names)
{
    const auto cfg = resolve(a);
    std::vector<iotsched::SchedulerKind> kinds;
    if (names.empty()) {
        kinds = iotsched::all_schedulers();
    }
    for (const auto& n : names) {
        kinds.push_back(iotsched::scheduler_from_string(n));
    }
    const auto cmp = iotsched::compare_schedulers(cfg, kinds, std::filesystem::path(a.out_dir));
    iotsched::print_comparison(std::cout, cmp);
    return 0;
}

int cmd_bench_latency(const CommonArgs& a, const std::vector<std::string>& names, int reps)
{
    auto cfg = resolve(a);
    std::vector<std::string> list = names;
    if (list.empty()) {
        list = {"dqn_ia", "pgn_ia", "ddpgn_ia"};
    }
    std::cout << std::left << std::setw(12) << "scheduler" << std::setw(16) << "train ms/slot" << std::setw(16)
              << "test ms/slot" << std::setw(18) << "finish ms/real." << "amortized train ms/slot\n";
    for (const auto& n : list) {
        cfg.scheduler = iotsched::scheduler_from_string(n);
        const auto l = iotsched::measure_drl_latency(cfg, reps);
        std::cout << std::left << std::setw(12) << n << std::setw(16) << l.train_step_ms << std::setw(16)
                  << l.test_step_ms << std::setw(18) << l.finish_ms << l.amortized_train_ms << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multi-cell uplink scheduler simulator"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, cmp_args, lat_args;
    int gen_limit = 10;
    bool no_test = false;
    bool record_latency = false;
    std::string checkpoints;
    std::vector<std::string> cmp_names, lat_names;
    int reps = 20;

    auto* gen = app.add_subcommand("generate", "write train/test realizations as JSON");
    add_common(gen, gen_args);
    gen->add_option("--limit", gen_limit, "realizations written per split")->capture_default_str();

    auto* train = app.add_subcommand("train", "run one scheduler: train (DRL) then evaluate on the test split");
    add_common(train, train_args);
    train->add_flag("--no-test", no_test, "skip the test split");
    train->add_flag("--record-latency", record_latency, "fill the latency columns");

    auto* eval = app.add_subcommand("evaluate", "evaluate saved DRL checkpoints on the test split");
    add_common(eval, eval_args);
    eval->add_option("--checkpoints", checkpoints, "checkpoint directory (default <out>/checkpoints)");

    auto* cmp = app.add_subcommand("compare", "run several schedulers and tabulate quartiles");
    add_common(cmp, cmp_args);
    cmp->add_option("--schedulers", cmp_names, "schedulers to compare (default all)")->delimiter(',');

    auto* lat = app.add_subcommand("bench-latency", "per-timeslot train/test latency of DRL schedulers");
    add_common(lat, lat_args);
    lat->add_option("--schedulers", lat_names, "DRL schedulers (default dqn_ia,pgn_ia,ddpgn_ia)")->delimiter(',');
    lat->add_option("--repetitions", reps)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            return cmd_generate(gen_args, gen_limit);
        }
        if (train->parsed()) {
            return cmd_train(train_args, no_test, record_latency);
        }
        if (eval->parsed()) {
            return cmd_evaluate(eval_args, checkpoints);
        }
        if (cmp->parsed()) {
            return cmd_compare(cmp_args, cmp_names);
        }
        if (lat->parsed()) {
            return cmd_bench_latency(lat_args, lat_names, reps);
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
