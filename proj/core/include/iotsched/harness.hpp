// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "iotsched/agents.hpp"
#include "iotsched/baseline.hpp"
#include "iotsched/benchmark_solver.hpp"
#include "iotsched/channel.hpp"
#include "iotsched/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iotsched {

enum class SchedulerKind {
    BaselineNoIci,
    BaselineIci,
    BaselineReTx,
    BenchmarkG,
    BenchmarkF,
    DqnIa,
    DqnPa,
    PgnIa,
    PgnPa,
    DdpgnIa,
    DdpgnPa,
};

std::string_view to_string(SchedulerKind kind);
SchedulerKind scheduler_from_string(std::string_view name);
std::vector<SchedulerKind> all_schedulers();
bool is_drl(SchedulerKind kind);
bool is_benchmark(SchedulerKind kind);
bool is_baseline(SchedulerKind kind);
Algorithm algorithm_of(SchedulerKind kind);
ActionMode action_mode_of(SchedulerKind kind);

struct RunConfig {
    std::string tech = "nb-iot"; // a technology name, or "mixed"
    SchedulerKind scheduler = SchedulerKind::DdpgnIa;
    RewardMode reward_mode = RewardMode::Centralized;
    bool fading = true;
    bool shadowing = true;
    bool wraparound = true;
    int cells = 7;
    int devices_per_cell = 12;
    int sc_count = 12;
    int timeslots = 20;
    int omega_train = 500;
    int omega_test = 500;
    std::uint64_t seed = 1;
    double isd = 500.0;
    double lowest_mcs_db = -6.0;
    std::vector<double> ici_grid = default_compensation_grid();
    DrlHyper hyper;
    SolverOptions solver;
    bool record_latency = false;
    int latency_repetitions = 20;
    bool write_traces = true;
    int trace_realizations = 10;
    bool run_test = true;
    int jobs = 1;

    std::vector<Tech> techs() const;
};

/// "paper" (7 cells x 12 devices, 12 SCs, 500/500 realizations) or "tiny"
/// (3 x 3, 3 SCs, 100/100).
RunConfig preset(std::string_view name);

nlohmann::json config_to_json(const RunConfig& config);
/// Missing keys keep their defaults. Throws ConfigError on bad values.
RunConfig config_from_json(const nlohmann::json& doc, RunConfig base = {});
/// Consistency checks run before any compute.
void validate(const RunConfig& config);
/// Sets `path` (dot separated) in `doc`; `value` is parsed as JSON when possible,
/// otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& path, const std::string& value);

enum class Split { Train, Test };

struct RealizationSet {
    Split split = Split::Train;
    std::vector<Realization> items;
    std::vector<ScAssignment> assignments;
};

/// Realization `index` of a split; train and test draw from separate seed streams.
Realization make_realization(const RunConfig& config, Split split, int index);
RealizationSet generate_set(const RunConfig& config, Split split);

struct LatencyReport {
    double train_step_ms = 0.0;
    double test_step_ms = 0.0;
    /// Per-realization learning cost (replay update and snapshot), and its share per timeslot.
    double finish_ms = 0.0;
    double amortized_train_ms = 0.0;
};

struct ExperimentResult {
    RunConfig config;
    std::vector<MetricsRecord> train_records;
    std::vector<MetricsRecord> test_records;
    /// Rate grids behind the records, same order. Sweep baselines keep the GM-optimal grid.
    std::vector<RateGrid> train_grids;
    std::vector<RateGrid> test_grids;
    std::optional<LatencyReport> latency;
    /// Best compensation per metric for ICI baselines (dBm).
    std::optional<double> ici_am, ici_gm, ici_hm;
    int solver_infeasible = 0;
    int solver_converged = 0;
    int solver_solves = 0;
    nlohmann::json summary;
};

/// Generates the train/test sets, trains DRL schedulers on the train split, evaluates
/// on the test split, and writes config.json, metrics.csv, summary.json, checkpoints/
/// and traces/ under `out_dir` when given.
ExperimentResult run_experiment(const RunConfig& config,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Test-split evaluation of DRL checkpoints written by a previous run.
ExperimentResult evaluate_checkpoints(const RunConfig& config, const std::filesystem::path& checkpoints,
                                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct FixedRun {
    RateGrid grid;
    double avg_delay_frames = 0.0;
    int infeasible = 0;
    int converged = 0;
    int solves = 0;
};

/// Rate grid of any non-learning scheduler on one realization. Baseline ICI/ReTx use
/// `compensation_dbm`; benchmarks solve every timeslot (once without fading).
FixedRun run_fixed_scheduler(const RunConfig& config, SchedulerKind kind, const Realization& realization,
                             const ScAssignment& assignment, std::optional<double> compensation_dbm);

struct ComparisonRow {
    SchedulerKind scheduler;
    Quartiles am, gm, hm;
    std::optional<LatencyReport> latency;
};

struct Comparison {
    std::vector<ComparisonRow> rows;
    /// Human-readable notes on violated expectations, e.g. "benchmark_f < ddpgn_ia (gm)".
    std::vector<std::string> violations;
};

/// Runs `schedulers` on the network of `base` and tabulates test-split quartiles.
Comparison compare_schedulers(const RunConfig& base, const std::vector<SchedulerKind>& schedulers,
                              const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Writes the comparison as an aligned text table.
void print_comparison(std::ostream& out, const Comparison& comparison);

/// Per-timeslot latency of train and test steps for one DRL scheduler.
LatencyReport measure_drl_latency(const RunConfig& config, int repetitions);

} // namespace iotsched
