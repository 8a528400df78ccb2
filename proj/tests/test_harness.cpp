// SPDX-License-Identifier: Apache-2.0
#include "iotsched/harness.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace iotsched;
namespace fs = std::filesystem;

namespace {

RunConfig small(SchedulerKind kind, int omega = 4)
{
    RunConfig c = preset("tiny");
    c.scheduler = kind;
    c.omega_train = omega;
    c.omega_test = omega;
    c.hyper.minibatch = 50;
    c.hyper.replay_capacity = 10000;
    return c;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("iotsched_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("scheduler names", "[harness]")
{
    CHECK(all_schedulers().size() == 11);
    for (SchedulerKind k : all_schedulers()) {
        CHECK(scheduler_from_string(to_string(k)) == k);
        CHECK(static_cast<int>(is_drl(k)) + static_cast<int>(is_benchmark(k)) + static_cast<int>(is_baseline(k)) ==
              1);
    }
    CHECK(algorithm_of(SchedulerKind::PgnPa) == Algorithm::Pgn);
    CHECK(action_mode_of(SchedulerKind::PgnPa) == ActionMode::Pa);
    CHECK_THROWS_AS(scheduler_from_string("ppo_ia"), ConfigError);
}

TEST_CASE("presets and configuration", "[harness]")
{
    const RunConfig paper = preset("paper");
    CHECK(paper.cells == 7);
    CHECK(paper.devices_per_cell == 12);
    CHECK(paper.sc_count == 12);
    CHECK(paper.omega_train == 500);
    const RunConfig tiny = preset("tiny");
    CHECK(tiny.cells == 3);
    CHECK(tiny.devices_per_cell == 3);
    CHECK(tiny.omega_test == 100);
    CHECK_THROWS_AS(preset("huge"), ConfigError);

    RunConfig c = tiny;
    c.scheduler = SchedulerKind::PgnPa;
    c.hyper.lr_p = 3e-4;
    c.solver.starts = 2;
    c.ici_grid = {-100.0};
    const RunConfig back = config_from_json(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));

    nlohmann::json doc = config_to_json(tiny);
    apply_override(doc, "hyper.eps_q", "0.5");
    apply_override(doc, "scheduler", "dqn_pa");
    apply_override(doc, "tech", "lte-m");
    const RunConfig o = config_from_json(doc);
    CHECK(o.hyper.eps_q == 0.5);
    CHECK(o.scheduler == SchedulerKind::DqnPa);
    CHECK(o.techs() == std::vector<Tech>{Tech::LteM});
    CHECK_THROWS_AS(apply_override(doc, "", "1"), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"scheduler", "nope"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"cells", "three"}}), ConfigError);

    RunConfig mixed = tiny;
    mixed.tech = "mixed";
    CHECK(mixed.techs().size() == 3);
}

TEST_CASE("validation catches bad configurations", "[harness]")
{
    CHECK_NOTHROW(validate(preset("tiny")));
    CHECK_NOTHROW(validate(preset("paper")));
    auto bad = [](auto mutate) {
        RunConfig c = preset("tiny");
        mutate(c);
        return c;
    };
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.cells = 0; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.cells = 8; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.devices_per_cell = 4; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.timeslots = 0; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.omega_train = 0; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.tech = "wifi"; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.hyper.eps_q = 1.5; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.hyper.replay_capacity = 10; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.latency_repetitions = 5; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) { c.lowest_mcs_db = 5.0; })), ConfigError);
    CHECK_THROWS_AS(validate(bad([](RunConfig& c) {
                        c.scheduler = SchedulerKind::BaselineIci;
                        c.ici_grid.clear();
                    })),
                    ConfigError);
    CHECK_THROWS_AS(run_experiment(bad([](RunConfig& c) { c.sc_count = 2; })), ConfigError);
}

TEST_CASE("train and test splits are disjoint", "[harness]")
{
    RunConfig c = small(SchedulerKind::BaselineNoIci, 5);
    const RealizationSet train = generate_set(c, Split::Train);
    const RealizationSet test = generate_set(c, Split::Test);
    REQUIRE(train.items.size() == 5);
    REQUIRE(test.items.size() == 5);
    std::set<std::uint64_t> ids;
    std::set<std::vector<double>> gains;
    for (const auto* set : {&train, &test}) {
        for (const auto& r : set->items) {
            ids.insert(r.id);
            gains.insert(r.gains);
            CHECK(r.num_devices() == 9);
            CHECK(r.timeslots == 20);
        }
    }
    CHECK(ids.size() == 10);
    CHECK(gains.size() == 10);

    // Realization k does not depend on how many others are generated.
    c.omega_test = 2;
    CHECK(generate_set(c, Split::Test).items[1].gains == test.items[1].gains);
    CHECK(make_realization(c, Split::Test, 1).gains == test.items[1].gains);
}

TEST_CASE("fixed schedulers without fading are constant in time", "[harness]")
{
    RunConfig c = small(SchedulerKind::BaselineNoIci);
    c.fading = false;
    const Realization r = make_realization(c, Split::Test, 0);
    const ScAssignment a = round_robin_assign(r, c.sc_count);
    for (SchedulerKind k : {SchedulerKind::BaselineNoIci, SchedulerKind::BaselineIci, SchedulerKind::BenchmarkF}) {
        const FixedRun run = run_fixed_scheduler(c, k, r, a, -100.0);
        for (int t = 1; t < run.grid.timeslots; ++t) {
            for (int i = 0; i < run.grid.devices; ++i) {
                CHECK(run.grid.at(t, i) == run.grid.at(0, i));
            }
        }
        if (is_benchmark(k)) {
            CHECK(run.solves == 1);
        }
    }
}

TEST_CASE("results keep the rate grid behind each record", "[harness]")
{
    for (SchedulerKind k : {SchedulerKind::BaselineIci, SchedulerKind::PgnIa}) {
        CAPTURE(to_string(k));
        const ExperimentResult res = run_experiment(small(k, 3));
        REQUIRE(res.test_grids.size() == res.test_records.size());
        REQUIRE(res.train_grids.size() == res.train_records.size());
        for (std::size_t i = 0; i < res.test_records.size(); ++i) {
            CHECK(compute_metrics(res.test_grids[i]).gm == res.test_records[i].gm);
        }
        for (std::size_t i = 0; i < res.train_records.size(); ++i) {
            CHECK(compute_metrics(res.train_grids[i]).am == res.train_records[i].am);
        }
        CHECK(res.train_records.size() == (is_drl(k) ? 3u : 0u));
    }
}

TEST_CASE("runs are byte-for-byte reproducible", "[harness]")
{
    for (SchedulerKind k : {SchedulerKind::BaselineReTx, SchedulerKind::BenchmarkF, SchedulerKind::DqnIa,
                            SchedulerKind::DdpgnPa}) {
        CAPTURE(to_string(k));
        RunConfig c = small(k, 3);
        c.solver.starts = 2;
        const fs::path a = scratch("repro_a");
        const fs::path b = scratch("repro_b");
        run_experiment(c, a);
        c.jobs = 2;
        run_experiment(c, b);
        REQUIRE(fs::exists(a / "metrics.csv"));
        CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
        CHECK(fs::exists(a / "summary.json"));
        CHECK(fs::exists(a / "config.json"));
        if (is_drl(k)) {
            CHECK(slurp(a / "metrics_train.csv") == slurp(b / "metrics_train.csv"));
            CHECK(slurp(a / "traces" / "train_trace.csv") == slurp(b / "traces" / "train_trace.csv"));
            CHECK(fs::exists(a / "checkpoints" / "agent_0_net.nnp"));
        }
        fs::remove_all(a);
        fs::remove_all(b);
    }
}

TEST_CASE("frozen evaluation of checkpoints", "[harness]")
{
    RunConfig c = small(SchedulerKind::PgnIa, 3);
    const fs::path dir = scratch("frozen");
    const ExperimentResult trained = run_experiment(c, dir);
    reset_reward_instrumentation();
    const ExperimentResult e1 = evaluate_checkpoints(c, dir / "checkpoints");
    const ExperimentResult e2 = evaluate_checkpoints(c, dir / "checkpoints");
    CHECK(centralized_reward_invocations() == 0);
    REQUIRE(e1.test_records.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(e1.test_records[k].gm == e2.test_records[k].gm);
        CHECK(e1.test_records[k].am == trained.test_records[k].am);
        CHECK(e1.test_records[k].realization_id == trained.test_records[k].realization_id);
    }
    CHECK_THROWS(evaluate_checkpoints(c, dir / "missing"));
    fs::remove_all(dir);
}

TEST_CASE("comparison table", "[harness]")
{
    RunConfig c = small(SchedulerKind::BaselineNoIci, 8);
    c.fading = false;
    c.solver.starts = 2;
    const Comparison cmp = compare_schedulers(c, {SchedulerKind::BaselineNoIci, SchedulerKind::BenchmarkF});
    REQUIRE(cmp.rows.size() == 2);
    CHECK(cmp.rows[1].gm.median > cmp.rows[0].gm.median);

    // Rows agree with a single-scheduler run on the same network.
    const ExperimentResult alone = run_experiment(c);
    std::vector<double> gm;
    for (const auto& r : alone.test_records) {
        gm.push_back(r.gm);
    }
    CHECK(quartiles(gm).median == cmp.rows[0].gm.median);

    std::ostringstream out;
    print_comparison(out, cmp);
    CHECK(out.str().find("benchmark_f") != std::string::npos);
}
