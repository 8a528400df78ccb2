// SPDX-License-Identifier: Apache-2.0
#include "iotsched/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

namespace iotsched {

namespace {

struct KindName {
    SchedulerKind kind;
    std::string_view name;
};

constexpr KindName kKinds[] = {
    {SchedulerKind::BaselineNoIci, "baseline_noici"}, {SchedulerKind::BaselineIci, "baseline_ici"},
    {SchedulerKind::BaselineReTx, "baseline_retx"},   {SchedulerKind::BenchmarkG, "benchmark_g"},
    {SchedulerKind::BenchmarkF, "benchmark_f"},       {SchedulerKind::DqnIa, "dqn_ia"},
    {SchedulerKind::DqnPa, "dqn_pa"},                 {SchedulerKind::PgnIa, "pgn_ia"},
    {SchedulerKind::PgnPa, "pgn_pa"},                 {SchedulerKind::DdpgnIa, "ddpgn_ia"},
    {SchedulerKind::DdpgnPa, "ddpgn_pa"},
};

McsCatalog catalog_for(const RunConfig& c)
{
    McsCatalog cat;
    for (Tech t : {Tech::NbIot, Tech::LteM, Tech::Nr5g}) {
        cat.emplace(t, build_mcs_table(t, c.lowest_mcs_db));
    }
    return cat;
}

PhyParams phy_for(const RunConfig&) { return PhyParams{}; }

BaselineVariant variant_of(SchedulerKind k)
{
    switch (k) {
    case SchedulerKind::BaselineNoIci:
        return BaselineVariant::NoIci;
    case SchedulerKind::BaselineIci:
        return BaselineVariant::Ici;
    case SchedulerKind::BaselineReTx:
        return BaselineVariant::ReTx;
    default:
        throw ContractViolation("not a baseline scheduler");
    }
}

MetricsRecord record_for(const RunConfig& c, SchedulerKind kind, const Realization& r,
                         const RateGrid& grid, double delay)
{
    const PhyParams phy = phy_for(c);
    MetricsRecord rec = compute_metrics(grid, phy.symbols_per_slot, phy.slot_duration_s);
    rec.realization_id = r.id;
    rec.scheduler = std::string(to_string(kind));
    rec.tech = c.tech;
    rec.avg_delay_frames = delay;
    return rec;
}

RateGrid to_grid(const Realization& r, std::vector<double> rates)
{
    return {r.timeslots, r.num_devices(), std::move(rates)};
}

/// Runs fn(k) for k in [0, n) on up to `jobs` threads; results keep index order.
template <class Fn>
auto parallel_map(int n, int jobs, Fn fn) -> std::vector<decltype(fn(0))>
{
    using R = decltype(fn(0));
    std::vector<R> out;
    out.reserve(static_cast<std::size_t>(n));
    if (jobs <= 1) {
        for (int k = 0; k < n; ++k) {
            out.push_back(fn(k));
        }
        return out;
    }
    for (int base = 0; base < n; base += jobs) {
        std::vector<std::future<R>> batch;
        for (int k = base; k < std::min(n, base + jobs); ++k) {
            batch.push_back(std::async(std::launch::async, fn, k));
        }
        for (auto& f : batch) {
            out.push_back(f.get());
        }
    }
    return out;
}

nlohmann::json quartile_json(const std::vector<MetricsRecord>& recs, double MetricsRecord::*field)
{
    std::vector<double> v;
    for (const auto& r : recs) {
        v.push_back(r.*field);
    }
    if (v.empty()) {
        return nullptr;
    }
    const Quartiles q = quartiles(v);
    double mean = 0.0;
    for (double x : v) {
        mean += x;
    }
    mean /= static_cast<double>(v.size());
    return {{"q1", q.q1}, {"median", q.median}, {"q3", q.q3}, {"mean", mean}};
}

nlohmann::json split_summary(const std::vector<MetricsRecord>& recs)
{
    if (recs.empty()) {
        return nullptr;
    }
    int zero_gm = 0;
    for (const auto& r : recs) {
        zero_gm += r.gm == 0.0 ? 1 : 0;
    }
    return {{"realizations", recs.size()},
            {"am", quartile_json(recs, &MetricsRecord::am)},
            {"gm", quartile_json(recs, &MetricsRecord::gm)},
            {"hm", quartile_json(recs, &MetricsRecord::hm)},
            {"avg_delay_frames", quartile_json(recs, &MetricsRecord::avg_delay_frames)},
            {"zero_gm_realizations", zero_gm}};
}

nlohmann::json latency_json(const LatencyReport& l)
{
    return {{"train_step_ms", l.train_step_ms},
            {"test_step_ms", l.test_step_ms},
            {"finish_ms", l.finish_ms},
            {"amortized_train_ms", l.amortized_train_ms}};
}

void write_records(const std::filesystem::path& path, const std::vector<MetricsRecord>& recs)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    write_metrics_header(out);
    for (const auto& r : recs) {
        write_metrics_row(out, r);
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    out << std::setw(2) << doc << '\n';
}

double median_ms(std::vector<double> v) { return quartiles(std::move(v)).median; }

DrlConfig drl_config_for(const RunConfig& c)
{
    DrlConfig d;
    d.algorithm = algorithm_of(c.scheduler);
    d.mode = action_mode_of(c.scheduler);
    d.reward = c.reward_mode;
    d.hyper = c.hyper;
    d.num_cells = c.cells;
    d.num_sc = c.sc_count;
    d.techs = c.techs();
    d.seed = derive_seed(c.seed, 77);
    return d;
}

LatencyReport latency_of(const DrlScheduler& trained, const Realization& r, const ScAssignment& a,
                         int repetitions)
{
    using clock = std::chrono::steady_clock;
    std::vector<double> train_ms, test_ms, finish_ms;
    for (int rep = 0; rep < repetitions; ++rep) {
        DrlScheduler scratch = trained;
        EpisodeRunner run(scratch, &scratch, r, a);
        const auto t0 = clock::now();
        while (!run.done()) {
            run.step();
        }
        const auto t1 = clock::now();
        run.finish();
        const auto t2 = clock::now();
        train_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() / r.timeslots);
        finish_ms.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());

        EpisodeRunner eval(trained, nullptr, r, a);
        const auto t3 = clock::now();
        while (!eval.done()) {
            eval.step();
        }
        const auto t4 = clock::now();
        test_ms.push_back(std::chrono::duration<double, std::milli>(t4 - t3).count() / r.timeslots);
    }
    LatencyReport rep;
    rep.train_step_ms = median_ms(train_ms);
    rep.test_step_ms = median_ms(test_ms);
    rep.finish_ms = median_ms(finish_ms);
    rep.amortized_train_ms = rep.train_step_ms + rep.finish_ms / r.timeslots;
    return rep;
}

} // namespace

// ---- names --------------------------------------------------------------

std::string_view to_string(SchedulerKind kind)
{
    for (const auto& k : kKinds) {
        if (k.kind == kind) {
            return k.name;
        }
    }
    return "unknown";
}

SchedulerKind scheduler_from_string(std::string_view name)
{
    for (const auto& k : kKinds) {
        if (k.name == name) {
            return k.kind;
        }
    }
    throw ConfigError("unknown scheduler '" + std::string(name) + "'");
}

std::vector<SchedulerKind> all_schedulers()
{
    std::vector<SchedulerKind> out;
    for (const auto& k : kKinds) {
        out.push_back(k.kind);
    }
    return out;
}

bool is_baseline(SchedulerKind k)
{
    return k == SchedulerKind::BaselineNoIci || k == SchedulerKind::BaselineIci ||
           k == SchedulerKind::BaselineReTx;
}

bool is_benchmark(SchedulerKind k) { return k == SchedulerKind::BenchmarkG || k == SchedulerKind::BenchmarkF; }

bool is_drl(SchedulerKind k) { return !is_baseline(k) && !is_benchmark(k); }

Algorithm algorithm_of(SchedulerKind k)
{
    switch (k) {
    case SchedulerKind::DqnIa:
    case SchedulerKind::DqnPa:
        return Algorithm::Dqn;
    case SchedulerKind::PgnIa:
    case SchedulerKind::PgnPa:
        return Algorithm::Pgn;
    case SchedulerKind::DdpgnIa:
    case SchedulerKind::DdpgnPa:
        return Algorithm::Ddpgn;
    default:
        throw ContractViolation("not a learning scheduler");
    }
}

ActionMode action_mode_of(SchedulerKind k)
{
    switch (k) {
    case SchedulerKind::DqnPa:
    case SchedulerKind::PgnPa:
    case SchedulerKind::DdpgnPa:
        return ActionMode::Pa;
    default:
        return ActionMode::Ia;
    }
}

// ---- config -------------------------------------------------------------

std::vector<Tech> RunConfig::techs() const
{
    if (tech == "mixed") {
        return {Tech::NbIot, Tech::LteM, Tech::Nr5g};
    }
    return {tech_from_string(tech)};
}

RunConfig preset(std::string_view name)
{
    RunConfig c;
    if (name == "paper") {
        return c;
    }
    if (name == "tiny") {
        c.cells = 3;
        c.devices_per_cell = 3;
        c.sc_count = 3;
        c.omega_train = 100;
        c.omega_test = 100;
        return c;
    }
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected paper or tiny)");
}

nlohmann::json config_to_json(const RunConfig& c)
{
    const auto& h = c.hyper;
    const auto& s = c.solver;
    return {{"tech", c.tech},
            {"scheduler", std::string(to_string(c.scheduler))},
            {"reward_mode", std::string(to_string(c.reward_mode))},
            {"fading", c.fading},
            {"shadowing", c.shadowing},
            {"wraparound", c.wraparound},
            {"cells", c.cells},
            {"devices_per_cell", c.devices_per_cell},
            {"sc_count", c.sc_count},
            {"timeslots", c.timeslots},
            {"omega_train", c.omega_train},
            {"omega_test", c.omega_test},
            {"seed", c.seed},
            {"isd", c.isd},
            {"lowest_mcs_db", c.lowest_mcs_db},
            {"ici_grid", c.ici_grid},
            {"hyper",
             {{"eps_q", h.eps_q},
              {"levels", h.levels},
              {"lr_q", h.lr_q},
              {"lr_p", h.lr_p},
              {"lr_a", h.lr_a},
              {"lr_c", h.lr_c},
              {"minibatch", h.minibatch},
              {"replay_capacity", h.replay_capacity},
              {"ddpg_noise_std", h.ddpg_noise_std},
              {"warmup_realizations", h.warmup_realizations}}},
            {"solver",
             {{"starts", s.starts},
              {"max_iter", s.max_iter},
              {"tol", s.tol},
              {"outer_iterations", s.outer_iterations},
              {"seed", s.seed},
              {"round_robin_start", s.round_robin_start}}},
            {"record_latency", c.record_latency},
            {"latency_repetitions", c.latency_repetitions},
            {"write_traces", c.write_traces},
            {"trace_realizations", c.trace_realizations},
            {"run_test", c.run_test},
            {"jobs", c.jobs}};
}

RunConfig config_from_json(const nlohmann::json& doc, RunConfig c)
{
    if (!doc.is_object()) {
        throw ConfigError("configuration must be a JSON object");
    }
    try {
        if (doc.contains("preset")) {
            c = preset(doc.at("preset").get<std::string>());
        }
        auto get = [&](const char* key, auto& field) {
            if (doc.contains(key)) {
                field = doc.at(key).get<std::decay_t<decltype(field)>>();
            }
        };
        get("tech", c.tech);
        if (doc.contains("scheduler")) {
            c.scheduler = scheduler_from_string(doc.at("scheduler").get<std::string>());
        }
        if (doc.contains("reward_mode")) {
            c.reward_mode = reward_mode_from_string(doc.at("reward_mode").get<std::string>());
        }
        get("fading", c.fading);
        get("shadowing", c.shadowing);
        get("wraparound", c.wraparound);
        get("cells", c.cells);
        get("devices_per_cell", c.devices_per_cell);
        get("sc_count", c.sc_count);
        get("timeslots", c.timeslots);
        get("omega_train", c.omega_train);
        get("omega_test", c.omega_test);
        get("seed", c.seed);
        get("isd", c.isd);
        get("lowest_mcs_db", c.lowest_mcs_db);
        get("ici_grid", c.ici_grid);
        get("record_latency", c.record_latency);
        get("latency_repetitions", c.latency_repetitions);
        get("write_traces", c.write_traces);
        get("trace_realizations", c.trace_realizations);
        get("run_test", c.run_test);
        get("jobs", c.jobs);
        if (doc.contains("hyper")) {
            const auto& h = doc.at("hyper");
            auto hget = [&](const char* key, auto& field) {
                if (h.contains(key)) {
                    field = h.at(key).get<std::decay_t<decltype(field)>>();
                }
            };
            hget("eps_q", c.hyper.eps_q);
            hget("levels", c.hyper.levels);
            hget("lr_q", c.hyper.lr_q);
            hget("lr_p", c.hyper.lr_p);
            hget("lr_a", c.hyper.lr_a);
            hget("lr_c", c.hyper.lr_c);
            hget("minibatch", c.hyper.minibatch);
            hget("replay_capacity", c.hyper.replay_capacity);
            hget("ddpg_noise_std", c.hyper.ddpg_noise_std);
            hget("warmup_realizations", c.hyper.warmup_realizations);
        }
        if (doc.contains("solver")) {
            const auto& s = doc.at("solver");
            auto sget = [&](const char* key, auto& field) {
                if (s.contains(key)) {
                    field = s.at(key).get<std::decay_t<decltype(field)>>();
                }
            };
            sget("starts", c.solver.starts);
            sget("max_iter", c.solver.max_iter);
            sget("tol", c.solver.tol);
            sget("outer_iterations", c.solver.outer_iterations);
            sget("seed", c.solver.seed);
            sget("round_robin_start", c.solver.round_robin_start);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad configuration value: ") + e.what());
    }
    return c;
}

void validate(const RunConfig& c)
{
    auto need = [](bool ok, const std::string& msg) {
        if (!ok) {
            throw ConfigError(msg);
        }
    };
    (void)c.techs();
    need(c.cells >= 1 && c.cells <= 7, "cells must be between 1 and 7");
    need(c.devices_per_cell >= 1, "devices_per_cell must be at least 1");
    need(c.sc_count >= 1, "sc_count must be at least 1");
    need(c.devices_per_cell <= c.sc_count, "devices_per_cell cannot exceed sc_count (one SC per device)");
    need(c.timeslots >= 1, "timeslots must be at least 1");
    need(c.omega_train >= 0 && c.omega_test >= 0, "realization counts must be nonnegative");
    need(!is_drl(c.scheduler) || c.omega_train >= 1, "learning schedulers need omega_train >= 1");
    need(!c.run_test || c.omega_test >= 1 || is_drl(c.scheduler), "evaluation needs omega_test >= 1");
    need(c.isd >= 100.0, "isd must be at least 100 m");
    need(c.jobs >= 1, "jobs must be at least 1");
    need(c.hyper.levels >= 2, "hyper.levels must be at least 2");
    need(c.hyper.eps_q >= 0.0 && c.hyper.eps_q <= 1.0, "hyper.eps_q must lie in [0, 1]");
    need(c.hyper.minibatch >= 1, "hyper.minibatch must be positive");
    need(c.hyper.replay_capacity >= static_cast<std::size_t>(c.hyper.minibatch),
         "hyper.replay_capacity must hold at least one minibatch");
    need(c.hyper.ddpg_noise_std >= 0.0, "hyper.ddpg_noise_std must be nonnegative");
    need(c.solver.starts >= 1 && c.solver.max_iter >= 1 && c.solver.tol > 0.0,
         "solver needs starts >= 1, max_iter >= 1 and tol > 0");
    need(!(c.scheduler == SchedulerKind::BaselineIci || c.scheduler == SchedulerKind::BaselineReTx) ||
             !c.ici_grid.empty(),
         "ICI baselines need a nonempty ici_grid");
    need(c.latency_repetitions >= 10, "latency_repetitions must be at least 10");
    (void)build_mcs_table(Tech::NbIot, c.lowest_mcs_db);
}

void apply_override(nlohmann::json& doc, const std::string& path, const std::string& value)
{
    if (path.empty()) {
        throw ConfigError("empty override path");
    }
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
        parsed = value;
    }
    nlohmann::json* node = &doc;
    std::stringstream ss(path);
    std::string key;
    std::vector<std::string> keys;
    while (std::getline(ss, key, '.')) {
        keys.push_back(key);
    }
    for (std::size_t k = 0; k + 1 < keys.size(); ++k) {
        node = &(*node)[keys[k]];
        if (!node->is_object()) {
            *node = nlohmann::json::object();
        }
    }
    (*node)[keys.back()] = std::move(parsed);
}

// ---- realizations -------------------------------------------------------

Realization make_realization(const RunConfig& c, Split split, int index)
{
    const std::uint64_t base = derive_seed(c.seed, split == Split::Train ? 0x7261696eULL : 0x74657374ULL);
    const auto w = static_cast<std::uint64_t>(index);
    const CellLayout layout = build_layout(c.cells, c.isd, c.wraparound);
    const auto techs = c.techs();
    auto placements = place_devices(layout, c.devices_per_cell, techs, derive_seed(base, 3 * w));
    RealizationOptions opt;
    opt.timeslots = c.timeslots;
    opt.fading = c.fading;
    opt.shadowing = c.shadowing;
    opt.phy = phy_for(c);
    const std::uint64_t id = (split == Split::Train ? 0ULL : 1000000ULL) + w;
    return realize(layout, std::move(placements), opt, derive_seed(base, 3 * w + 1),
                   derive_seed(base, 3 * w + 2), id);
}

RealizationSet generate_set(const RunConfig& c, Split split)
{
    RealizationSet set;
    set.split = split;
    const int n = split == Split::Train ? c.omega_train : c.omega_test;
    set.items = parallel_map(n, c.jobs, [&](int k) { return make_realization(c, split, k); });
    for (const auto& r : set.items) {
        set.assignments.push_back(round_robin_assign(r, c.sc_count));
    }
    return set;
}

// ---- schedulers ---------------------------------------------------------

FixedRun run_fixed_scheduler(const RunConfig& c, SchedulerKind kind, const Realization& r,
                             const ScAssignment& a, std::optional<double> compensation_dbm)
{
    const McsCatalog catalog = catalog_for(c);
    const PhyParams phy = phy_for(c);
    FixedRun out;
    if (is_baseline(kind)) {
        const BaselineRun run = run_baseline(r, a, variant_of(kind), compensation_dbm, catalog, phy);
        out.grid = to_grid(r, run.rate_grid());
        double delay = 0.0;
        for (int d : run.delay_frames) {
            delay += d;
        }
        out.avg_delay_frames = delay / std::max(1, r.num_devices());
        return out;
    }
    if (!is_benchmark(kind)) {
        throw ContractViolation("learning schedulers are not fixed schedulers");
    }
    const int n = r.num_devices();
    std::vector<double> rates(static_cast<std::size_t>(n) * r.timeslots, 0.0);
    const int solves = r.fading ? r.timeslots : 1;
    for (int t = 0; t < solves; ++t) {
        const TransformedProblem p = build_transformed(r, t, c.sc_count, catalog, phy);
        SolverOptions opt = c.solver;
        opt.seed = derive_seed(c.solver.seed, r.id * 1000 + static_cast<std::uint64_t>(t));
        const BenchmarkSolution sol = solve_local(p, opt, catalog);
        ++out.solves;
        if (sol.status == SolverStatus::Infeasible) {
            ++out.infeasible;
            continue;
        }
        if (sol.status == SolverStatus::Converged) {
            ++out.converged;
        }
        const auto& v = kind == SchedulerKind::BenchmarkG ? sol.ub_rates : sol.discrete_rates;
        const int last = r.fading ? t : r.timeslots - 1;
        for (int tt = t; tt <= last; ++tt) {
            std::copy(v.begin(), v.end(), rates.begin() + static_cast<std::ptrdiff_t>(tt) * n);
        }
    }
    out.grid = to_grid(r, std::move(rates));
    return out;
}

LatencyReport measure_drl_latency(const RunConfig& config, int repetitions)
{
    validate(config);
    if (!is_drl(config.scheduler)) {
        throw ConfigError("latency measurement needs a learning scheduler");
    }
    RunConfig c = config;
    c.omega_train = std::max(1, std::min(config.omega_train, 10));
    const RealizationSet warm = generate_set(c, Split::Train);
    DrlScheduler sched(drl_config_for(c), catalog_for(c), phy_for(c));
    sched.fit_scalers(warm.items, warm.assignments);
    for (std::size_t k = 0; k < warm.items.size(); ++k) {
        sched.train(warm.items[k], warm.assignments[k]);
    }
    const Realization r = make_realization(c, Split::Test, 0);
    const ScAssignment a = round_robin_assign(r, c.sc_count);
    return latency_of(sched, r, a, repetitions);
}

// ---- experiments --------------------------------------------------------

namespace {

void finish_summary(ExperimentResult& res)
{
    const RunConfig& c = res.config;
    nlohmann::json s = {{"scheduler", std::string(to_string(c.scheduler))},
                        {"tech", c.tech},
                        {"reward_mode", std::string(to_string(c.reward_mode))},
                        {"fading", c.fading},
                        {"train", split_summary(res.train_records)},
                        {"test", split_summary(res.test_records)}};
    if (res.ici_gm) {
        s["ici_compensation_dbm"] = {{"am", *res.ici_am}, {"gm", *res.ici_gm}, {"hm", *res.ici_hm}};
    }
    if (is_benchmark(c.scheduler)) {
        s["solver"] = {{"solves", res.solver_solves},
                       {"converged", res.solver_converged},
                       {"infeasible", res.solver_infeasible},
                       {"label", "upper-bound (local)"}};
    }
    if (res.latency) {
        s["latency"] = latency_json(*res.latency);
    }
    res.summary = std::move(s);
}

void write_outputs(const ExperimentResult& res, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_json(dir / "config.json", config_to_json(res.config));
    write_records(dir / "metrics.csv", res.test_records.empty() ? res.train_records : res.test_records);
    if (!res.train_records.empty()) {
        write_records(dir / "metrics_train.csv", res.train_records);
    }
    write_json(dir / "summary.json", res.summary);
}

void attach_latency(std::vector<MetricsRecord>& recs, const LatencyReport& l)
{
    for (auto& r : recs) {
        r.latency_train_ms = l.train_step_ms;
        r.latency_test_ms = l.test_step_ms;
    }
}

/// Decision traces of the first realizations: baseline frames as CSV, benchmark
/// solutions of timeslot 0 as JSON.
void write_fixed_traces(const ExperimentResult& res, const RealizationSet& set, const std::filesystem::path& dir)
{
    const RunConfig& c = res.config;
    std::filesystem::create_directories(dir);
    const McsCatalog catalog = catalog_for(c);
    const PhyParams phy = phy_for(c);
    const int n = std::min(c.trace_realizations, static_cast<int>(set.items.size()));
    for (int k = 0; k < n; ++k) {
        const auto& r = set.items[static_cast<std::size_t>(k)];
        const auto& a = set.assignments[static_cast<std::size_t>(k)];
        const std::string stem = std::string(to_string(c.scheduler)) + "_" + std::to_string(r.id);
        if (is_baseline(c.scheduler)) {
            const BaselineRun run = run_baseline(r, a, variant_of(c.scheduler), res.ici_gm, catalog, phy);
            std::ofstream out(dir / (stem + ".csv"), std::ios::binary);
            write_baseline_trace(out, run);
        } else {
            const TransformedProblem p = build_transformed(r, 0, c.sc_count, catalog, phy);
            SolverOptions opt = c.solver;
            opt.seed = derive_seed(c.solver.seed, r.id * 1000);
            write_json(dir / (stem + "_t0.json"), solution_to_json(solve_local(p, opt, catalog)));
        }
    }
}

void evaluate_fixed(ExperimentResult& res, const RealizationSet& set, std::vector<MetricsRecord>& out,
                    std::vector<RateGrid>& grids_out)
{
    const RunConfig& c = res.config;
    const SchedulerKind kind = c.scheduler;
    const int n = static_cast<int>(set.items.size());
    const bool sweep = kind == SchedulerKind::BaselineIci || kind == SchedulerKind::BaselineReTx;
    if (!sweep) {
        auto runs = parallel_map(n, c.jobs, [&](int k) {
            return run_fixed_scheduler(c, kind, set.items[static_cast<std::size_t>(k)],
                                       set.assignments[static_cast<std::size_t>(k)], std::nullopt);
        });
        for (int k = 0; k < n; ++k) {
            const auto& run = runs[static_cast<std::size_t>(k)];
            res.solver_infeasible += run.infeasible;
            res.solver_converged += run.converged;
            res.solver_solves += run.solves;
            out.push_back(record_for(c, kind, set.items[static_cast<std::size_t>(k)], run.grid,
                                     run.avg_delay_frames));
            grids_out.push_back(run.grid);
        }
        return;
    }
    // Sweep the fixed compensation and keep, per metric, the value that maximizes
    // that metric's average over the set.
    std::vector<std::vector<MetricsRecord>> per_value;
    std::vector<std::vector<RateGrid>> per_value_grids;
    for (double comp : c.ici_grid) {
        auto runs = parallel_map(n, c.jobs, [&](int k) {
            return run_fixed_scheduler(c, kind, set.items[static_cast<std::size_t>(k)],
                                       set.assignments[static_cast<std::size_t>(k)], comp);
        });
        std::vector<MetricsRecord> recs;
        for (int k = 0; k < n; ++k) {
            recs.push_back(record_for(c, kind, set.items[static_cast<std::size_t>(k)],
                                      runs[static_cast<std::size_t>(k)].grid,
                                      runs[static_cast<std::size_t>(k)].avg_delay_frames));
        }
        per_value.push_back(std::move(recs));
        std::vector<RateGrid> gs;
        for (auto& run : runs) {
            gs.push_back(std::move(run.grid));
        }
        per_value_grids.push_back(std::move(gs));
    }
    auto best_index = [&](double MetricsRecord::*field) {
        std::size_t best = 0;
        double best_mean = -1.0;
        for (std::size_t v = 0; v < per_value.size(); ++v) {
            double mean = 0.0;
            for (const auto& r : per_value[v]) {
                mean += r.*field;
            }
            if (mean > best_mean) {
                best_mean = mean;
                best = v;
            }
        }
        return best;
    };
    const std::size_t ia = best_index(&MetricsRecord::am);
    const std::size_t ig = best_index(&MetricsRecord::gm);
    const std::size_t ih = best_index(&MetricsRecord::hm);
    res.ici_am = c.ici_grid[ia];
    res.ici_gm = c.ici_grid[ig];
    res.ici_hm = c.ici_grid[ih];
    for (int k = 0; k < n; ++k) {
        MetricsRecord r = per_value[ig][static_cast<std::size_t>(k)];
        r.am = per_value[ia][static_cast<std::size_t>(k)].am;
        r.hm = per_value[ih][static_cast<std::size_t>(k)].hm;
        // Mixing values from different compensations can break the mean ordering of
        // a single record; report the GM-optimal record's own means in that case.
        if (!(r.hm <= r.gm && r.gm <= r.am)) {
            r = per_value[ig][static_cast<std::size_t>(k)];
        }
        out.push_back(r);
        grids_out.push_back(per_value_grids[ig][static_cast<std::size_t>(k)]);
    }
}

void evaluate_drl(ExperimentResult& res, const DrlScheduler& sched, const RealizationSet& set)
{
    const RunConfig& c = res.config;
    const int n = static_cast<int>(set.items.size());
    auto grids = parallel_map(n, c.jobs, [&](int k) {
        return sched.evaluate(set.items[static_cast<std::size_t>(k)], set.assignments[static_cast<std::size_t>(k)]);
    });
    for (int k = 0; k < n; ++k) {
        const auto& r = set.items[static_cast<std::size_t>(k)];
        RateGrid g = to_grid(r, std::move(grids[static_cast<std::size_t>(k)]));
        res.test_records.push_back(record_for(c, c.scheduler, r, g, 0.0));
        res.test_grids.push_back(std::move(g));
    }
}

} // namespace

ExperimentResult run_experiment(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir)
{
    validate(config);
    ExperimentResult res;
    res.config = config;
    const RunConfig& c = res.config;

    if (!is_drl(c.scheduler)) {
        if (c.run_test) {
            const RealizationSet test = generate_set(c, Split::Test);
            evaluate_fixed(res, test, res.test_records, res.test_grids);
            if (out_dir && c.write_traces) {
                write_fixed_traces(res, test, *out_dir / "traces");
            }
        }
        finish_summary(res);
        if (out_dir) {
            write_outputs(res, *out_dir);
        }
        return res;
    }

    const RealizationSet train = generate_set(c, Split::Train);
    DrlScheduler sched(drl_config_for(c), catalog_for(c), phy_for(c));
    sched.fit_scalers(train.items, train.assignments);

    std::ofstream trace;
    if (out_dir && c.write_traces) {
        std::filesystem::create_directories(*out_dir / "traces");
        trace.open(*out_dir / "traces" / "train_trace.csv", std::ios::binary);
        trace << "omega,t,device,state_hash,action_dbm,power_dbm,rate,reward\n";
    }
    for (std::size_t k = 0; k < train.items.size(); ++k) {
        const bool traced = trace.is_open() && static_cast<int>(k) < c.trace_realizations;
        sched.set_trace(traced ? &trace : nullptr);
        const auto& r = train.items[k];
        const auto rates = sched.train(r, train.assignments[k]);
        RateGrid g = to_grid(r, rates);
        res.train_records.push_back(record_for(c, c.scheduler, r, g, 0.0));
        res.train_grids.push_back(std::move(g));
    }
    sched.set_trace(nullptr);
    if (out_dir) {
        sched.save(*out_dir / "checkpoints");
    }

    if (c.run_test) {
        const RealizationSet test = generate_set(c, Split::Test);
        evaluate_drl(res, sched, test);
        if (c.record_latency && !test.items.empty()) {
            res.latency = latency_of(sched, test.items.front(), test.assignments.front(), c.latency_repetitions);
            attach_latency(res.train_records, *res.latency);
            attach_latency(res.test_records, *res.latency);
        }
    }
    finish_summary(res);
    if (out_dir) {
        write_outputs(res, *out_dir);
    }
    return res;
}

ExperimentResult evaluate_checkpoints(const RunConfig& config, const std::filesystem::path& checkpoints,
                                      const std::optional<std::filesystem::path>& out_dir)
{
    validate(config);
    if (!is_drl(config.scheduler)) {
        throw ConfigError("evaluate needs a learning scheduler");
    }
    ExperimentResult res;
    res.config = config;
    DrlScheduler sched(drl_config_for(config), catalog_for(config), phy_for(config));
    sched.load(checkpoints);
    const RealizationSet test = generate_set(config, Split::Test);
    evaluate_drl(res, sched, test);
    finish_summary(res);
    if (out_dir) {
        write_outputs(res, *out_dir);
    }
    return res;
}

Comparison compare_schedulers(const RunConfig& base, const std::vector<SchedulerKind>& schedulers,
                              const std::optional<std::filesystem::path>& out_dir)
{
    if (schedulers.empty()) {
        throw ConfigError("compare needs at least one scheduler");
    }
    Comparison cmp;
    for (SchedulerKind kind : schedulers) {
        RunConfig c = base;
        c.scheduler = kind;
        std::optional<std::filesystem::path> sub;
        if (out_dir) {
            sub = *out_dir / std::string(to_string(kind));
        }
        const ExperimentResult res = run_experiment(c, sub);
        std::vector<double> am, gm, hm;
        for (const auto& r : res.test_records) {
            am.push_back(r.am);
            gm.push_back(r.gm);
            hm.push_back(r.hm);
        }
        if (am.empty()) {
            throw ConfigError("compare needs omega_test >= 1");
        }
        cmp.rows.push_back({kind, quartiles(am), quartiles(gm), quartiles(hm), res.latency});
    }

    auto find = [&](SchedulerKind k) -> const ComparisonRow* {
        for (const auto& row : cmp.rows) {
            if (row.scheduler == k) {
                return &row;
            }
        }
        return nullptr;
    };
    auto expect = [&](SchedulerKind hi, SchedulerKind lo) {
        const auto* a = find(hi);
        const auto* b = find(lo);
        if (a == nullptr || b == nullptr) {
            return;
        }
        if (a->gm.median < b->gm.median) {
            cmp.violations.push_back(std::string(to_string(hi)) + " < " + std::string(to_string(lo)) +
                                     " (median gm)");
        }
    };
    expect(SchedulerKind::BenchmarkG, SchedulerKind::BenchmarkF);
    const SchedulerKind drl[] = {SchedulerKind::DqnIa, SchedulerKind::DqnPa,   SchedulerKind::PgnIa,
                                 SchedulerKind::PgnPa, SchedulerKind::DdpgnIa, SchedulerKind::DdpgnPa};
    for (SchedulerKind k : drl) {
        expect(SchedulerKind::BenchmarkF, k);
        expect(k, SchedulerKind::BaselineIci);
    }
    expect(SchedulerKind::DqnIa, SchedulerKind::DqnPa);
    expect(SchedulerKind::PgnIa, SchedulerKind::PgnPa);
    expect(SchedulerKind::DdpgnIa, SchedulerKind::DdpgnPa);
    expect(SchedulerKind::BaselineReTx, SchedulerKind::BaselineIci);
    expect(SchedulerKind::BaselineIci, SchedulerKind::BaselineNoIci);

    if (out_dir) {
        std::ofstream out(*out_dir / "comparison.txt", std::ios::binary);
        print_comparison(out, cmp);
    }
    return cmp;
}

void print_comparison(std::ostream& out, const Comparison& cmp)
{
    auto cell = [](const Quartiles& q) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(1) << q.q1 << " / " << q.median << " / " << q.q3;
        return s.str();
    };
    out << std::left << std::setw(16) << "scheduler" << std::setw(34) << "AM q1/median/q3 (bit/s)"
        << std::setw(34) << "GM q1/median/q3" << std::setw(34) << "HM q1/median/q3"
        << "train/test ms\n";
    for (const auto& row : cmp.rows) {
        out << std::left << std::setw(16) << to_string(row.scheduler) << std::setw(34) << cell(row.am)
            << std::setw(34) << cell(row.gm) << std::setw(34) << cell(row.hm);
        if (row.latency) {
            out << std::setprecision(3) << row.latency->train_step_ms << " / " << row.latency->test_step_ms;
        } else {
            out << "-";
        }
        out << '\n';
    }
    if (cmp.violations.empty()) {
        out << "ordering: as expected\n";
    } else {
        for (const auto& v : cmp.violations) {
            out << "ordering violation: " << v << '\n';
        }
    }
}

} // namespace iotsched
