// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of
// failed criteria (capped at 100).
#include "iotsched/iotsched.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

using namespace iotsched;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

/// Every record an acceptance run emits with its rate grid, for the metric-inequality criterion.
std::vector<std::pair<MetricsRecord, RateGrid>> g_records;

void collect(const ExperimentResult& r)
{
    for (std::size_t k = 0; k < r.train_records.size(); ++k) {
        g_records.emplace_back(r.train_records[k], r.train_grids.at(k));
    }
    for (std::size_t k = 0; k < r.test_records.size(); ++k) {
        g_records.emplace_back(r.test_records[k], r.test_grids.at(k));
    }
}

std::string fmt(const char* f, double a)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double median_gm(const std::vector<MetricsRecord>& recs)
{
    std::vector<double> v;
    for (const auto& r : recs) {
        v.push_back(r.gm);
    }
    return quartiles(v).median;
}

Outcome rate_functions()
{
    Outcome o{true, ""};
    int points = 0;
    for (Tech tech : {Tech::NbIot, Tech::LteM, Tech::Nr5g}) {
        const McsTable t = build_mcs_table(tech);
        for (int k = 0; k < 1000; ++k) {
            const double gamma = std::pow(10.0, -3.0 + 5.0 * k / 999.0); // 1e-3 .. 1e2
            ++points;
            if (discrete_rate_f(gamma, t) > envelope_rate_g(gamma)) {
                o.pass = false;
                o.detail += "f > g at " + fmt("%.6g", gamma) + "; ";
            }
        }
        for (int m = 0; m < t.levels(); ++m) {
            if (discrete_rate_f(t.thresholds[m], t) != t.efficiencies[m]) {
                o.pass = false;
                o.detail += std::string(to_string(tech)) + " f(gamma_m) != beta_m; ";
            }
        }
    }
    const double err = std::abs(envelope_rate_g(10.0) - std::exp(1.0));
    if (err > 1e-12) {
        o.pass = false;
    }
    o.detail += std::to_string(points) + " grid points, |g(10) - e| = " + fmt("%.3g", err);
    return o;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) {
        m.data()[k] = n(rng);
    }
    return m;
}

Outcome gradient_checks()
{
    Rng rng(2024);
    const int width = 3;          // tiny preset state width
    const int in = width + 2;     // actor / Q / policy input
    const int m = 32;
    const int probes = 200;
    const Eigen::MatrixXd states = random_matrix(in, m, rng);
    std::vector<int> actions;
    std::vector<double> rewards;
    std::uniform_int_distribution<int> pick(0, 9);
    std::uniform_real_distribution<double> rew(0.0, 3.0);
    for (int c = 0; c < m; ++c) {
        actions.push_back(pick(rng));
        rewards.push_back(rew(rng));
    }

    auto check = [&](const nn::MlpParams& net, const std::function<RuleGradient(const nn::MlpParams&)>& rule) {
        auto loss = [&](const std::vector<double>& flat) {
            nn::MlpParams p = net;
            p.unflatten(flat);
            return rule(p).value;
        };
        return nn::finite_difference_check(loss, net.flatten(), rule(net).grads.flatten(), probes, rng);
    };

    const nn::MlpParams q = nn::MlpParams::glorot(nn::standard_dims(in, 10), rng);
    const double e_q = check(q, [&](const nn::MlpParams& p) { return dqn_rule(p, states, actions, rewards); });
    const nn::MlpParams pi = nn::MlpParams::glorot(nn::standard_dims(in, 10), rng);
    const double e_p = check(pi, [&](const nn::MlpParams& p) { return pgn_rule(p, states, actions, rewards); });
    const nn::MlpParams actor = nn::MlpParams::glorot(nn::standard_dims(in, 1), rng);
    const nn::MlpParams critic = nn::MlpParams::glorot(nn::standard_dims(width + 1, 1), rng);
    const Eigen::MatrixXd gains = random_matrix(width, m, rng);
    const double e_a =
        check(actor, [&](const nn::MlpParams& p) { return actor_rule(p, critic, states, gains); });
    const Eigen::MatrixXd cin = random_matrix(width + 1, m, rng);
    const double e_c = check(critic, [&](const nn::MlpParams& p) { return critic_rule(p, cin, rewards); });

    const double worst = std::max({e_q, e_p, e_a, e_c});
    return {worst <= 1e-4, std::to_string(probes) + " probes per role; max rel err Q " + fmt("%.2e", e_q) +
                               ", policy " + fmt("%.2e", e_p) + ", actor " + fmt("%.2e", e_a) + ", critic " +
                               fmt("%.2e", e_c)};
}

Outcome fading_statistics()
{
    Rng rng(99);
    FadingProcess proc = FadingProcess::make(1, 10.0, 0.010, rng);
    const int steps = 100000;
    double power = 0.0;
    double lag = 0.0;
    double lag_norm = 0.0;
    std::complex<double> prev = proc.state[0];
    for (int k = 0; k < steps; ++k) {
        proc = jakes_step(std::move(proc), rng);
        const std::complex<double> h = proc.state[0];
        power += std::norm(h);
        lag += std::real(h * std::conj(prev));
        lag_norm += std::norm(prev);
        prev = h;
    }
    const double mean_power = power / steps;
    const double rho_hat = lag / lag_norm;
    const double j0 = bessel_j0(2.0 * kPi * 10.0 * 0.01);
    const bool ok = std::abs(rho_hat - j0) <= 0.01 && std::abs(rho_hat - 0.9022) <= 0.01 &&
                    std::abs(mean_power - 1.0) <= 0.02;
    return {ok, "lag-1 autocorrelation " + fmt("%.5f", rho_hat) + " (J0 = " + fmt("%.6f", j0) +
                    ", quoted 0.9022), mean |h|^2 " + fmt("%.5f", mean_power)};
}

Outcome solver_feasibility()
{
    const McsCatalog cat = default_mcs_catalog();
    const PhyParams phy;
    SolverOptions opt;
    int converged = 0;
    int violations = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const CellLayout layout = build_layout(2, 500.0, true);
        RealizationOptions ro;
        ro.timeslots = 1;
        ro.fading = false;
        const Realization r = realize(layout, place_devices(layout, 1, Tech::NbIot, derive_seed(seed, 11)), ro,
                                      derive_seed(seed, 12), derive_seed(seed, 13), seed);
        const TransformedProblem p = build_transformed(r, 0, 2, cat, phy);
        const BenchmarkSolution s = solve_local(p, opt, cat);
        if (s.status != SolverStatus::Converged) {
            continue;
        }
        ++converged;
        const double res = residual(p, s.x);
        worst = std::max(worst, res);
        bool bad = res > 1e-6;
        for (int i = 0; i < p.num_devices; ++i) {
            int active = 0;
            for (int sc = 0; sc < p.num_sc; ++sc) {
                active += s.powers.at(i, sc) > 10.0 * phy.eps_power_w ? 1 : 0;
            }
            bad = bad || active > 1;
        }
        violations += bad ? 1 : 0;
    }

    // Single-link closed form, both the SINR-cap and power-limited branches.
    const double gmax = cat.at(Tech::NbIot).gamma_max;
    double closed_err = 0.0;
    for (double snr : {0.05, 0.3, 0.9, 1.5, 10.0, 1e4}) {
        const double g = snr * gmax * phy.noise_w() / phy.pmax_w();
        const TransformedProblem p = build_transformed(1, {0}, {Tech::NbIot}, {g}, cat, phy);
        const BenchmarkSolution s = solve_local(p, opt, cat);
        const double expect = std::min(gmax, phy.pmax_w() * g / phy.noise_w());
        closed_err = s.status == SolverStatus::Infeasible ? 1.0
                                                          : std::max(closed_err, std::abs(s.sinrs[0] - expect) / expect);
    }
    const bool ok = violations == 0 && closed_err <= 1e-6 && converged > 0;
    return {ok, std::to_string(converged) + "/50 converged, " + std::to_string(violations) +
                    " violating, worst residual " + fmt("%.2e", worst) + "; closed-form rel err " +
                    fmt("%.2e", closed_err)};
}

RunConfig tiny(SchedulerKind kind, bool fading)
{
    RunConfig c = preset("tiny");
    c.scheduler = kind;
    c.fading = fading;
    c.write_traces = false;
    return c;
}

/// For every device with a non-outage estimate, count co-channel interferers whose
/// interference alone at P_max drives its SINR below the estimated level.
bool has_two_strong_interferers(const Realization& r, const ScAssignment& a, const McsCatalog& cat,
                                const PhyParams& phy)
{
    const auto est = estimate_sinr(r, a, std::nullopt, 0, phy);
    for (int i = 0; i < r.num_devices(); ++i) {
        const McsTable& t = cat.at(r.devices[i].tech);
        const int level = t.level_for(est[i]);
        if (level < 0) {
            continue;
        }
        const int b = r.devices[i].cell_id;
        const double tolerable = phy.pmax_w() * r.gain(0, i, b) / t.thresholds[level] - phy.noise_w();
        int strong = 0;
        for (int j = 0; j < r.num_devices(); ++j) {
            if (j != i && a.sc[j] == a.sc[i] && phy.pmax_w() * r.gain(0, j, b) >= tolerable) {
                ++strong;
            }
        }
        if (strong >= 2) {
            return true;
        }
    }
    return false;
}

Outcome ordering_chain()
{
    const ExperimentResult bf = run_experiment(tiny(SchedulerKind::BenchmarkF, false));
    const ExperimentResult dd = run_experiment(tiny(SchedulerKind::DdpgnIa, false));
    const ExperimentResult ici = run_experiment(tiny(SchedulerKind::BaselineIci, false));
    const ExperimentResult noici = run_experiment(tiny(SchedulerKind::BaselineNoIci, false));
    for (const auto* r : {&bf, &dd, &ici, &noici}) {
        collect(*r);
    }
    const double m_bf = median_gm(bf.test_records);
    const double m_dd = median_gm(dd.test_records);
    const double m_ici = median_gm(ici.test_records);

    const RunConfig c = tiny(SchedulerKind::BaselineNoIci, false);
    const RealizationSet test = generate_set(c, Split::Test);
    const McsCatalog cat = default_mcs_catalog();
    const PhyParams phy;
    int qualifying = 0;
    int nonzero = 0;
    for (std::size_t k = 0; k < test.items.size(); ++k) {
        if (!has_two_strong_interferers(test.items[k], test.assignments[k], cat, phy)) {
            continue;
        }
        ++qualifying;
        nonzero += noici.test_records[k].gm != 0.0 ? 1 : 0;
    }
    const bool ok = m_bf >= m_dd && m_dd >= m_ici && nonzero == 0;
    return {ok, "median GM benchmark_f " + fmt("%.1f", m_bf) + " >= ddpgn_ia " + fmt("%.1f", m_dd) +
                    " >= baseline_ici " + fmt("%.1f", m_ici) + "; noICI GM = 0 in " +
                    std::to_string(qualifying - nonzero) + "/" + std::to_string(qualifying) +
                    " realizations with >= 2 strong interferers (" + std::to_string(test.items.size()) +
                    " test realizations)"};
}

Outcome ia_vs_pa()
{
    const ExperimentResult ia = run_experiment(tiny(SchedulerKind::DdpgnIa, true));
    const ExperimentResult pa = run_experiment(tiny(SchedulerKind::DdpgnPa, true));
    collect(ia);
    collect(pa);
    const double a = median_gm(ia.test_records);
    const double b = median_gm(pa.test_records);
    return {a >= b, "median GM ddpgn_ia " + fmt("%.1f", a) + " vs ddpgn_pa " + fmt("%.1f", b) + " (" +
                        std::to_string(ia.test_records.size()) + " test realizations, fading)"};
}

Outcome reward_identity()
{
    Rng rng(7);
    int mismatches = 0;
    for (int it = 0; it < 1000; ++it) {
        const int sc = std::uniform_int_distribution<int>(1, 12)(rng);
        const int n = std::uniform_int_distribution<int>(1, 84)(rng);
        ScAssignment a;
        a.num_sc = sc;
        std::vector<double> rates;
        std::uniform_int_distribution<int> pick(0, sc - 1);
        std::uniform_real_distribution<double> u(0.0, 5.55);
        for (int i = 0; i < n; ++i) {
            a.sc.push_back(pick(rng));
            rates.push_back(it % 2 == 0 ? u(rng) : std::floor(u(rng) * 4.0) / 4.0);
        }
        const auto edge = compute_reward(RewardMode::Edge, a, rates);
        const auto central = compute_reward(RewardMode::Centralized, a, rates);
        for (int i = 0; i < n; ++i) {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                if (a.sc[j] == a.sc[i]) {
                    sum += edge[j];
                }
            }
            mismatches += central[i] == sum ? 0 : 1;
        }
    }
    return {mismatches == 0, "1000 instances, " + std::to_string(mismatches) + " entries differ"};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism()
{
    const fs::path root = fs::temp_directory_path() / "iotsched_acceptance_det";
    fs::remove_all(root);
    std::vector<std::string> differing;
    for (SchedulerKind k : all_schedulers()) {
        RunConfig c = tiny(k, true);
        c.omega_train = 10;
        c.omega_test = 5;
        c.write_traces = true;
        const fs::path a = root / (std::string(to_string(k)) + "_a");
        const fs::path b = root / (std::string(to_string(k)) + "_b");
        collect(run_experiment(c, a));
        collect(run_experiment(c, b));
        const std::string sa = slurp(a / "metrics.csv");
        if (sa.empty() || sa != slurp(b / "metrics.csv")) {
            differing.emplace_back(to_string(k));
        }
    }
    fs::remove_all(root);
    std::string d = std::to_string(all_schedulers().size()) + " schedulers run twice";
    for (const auto& s : differing) {
        d += "; differs: " + s;
    }
    return {differing.empty(), d};
}

/// Which equalities a grid's slot structure allows. A slot holding a zero rate adds 0
/// to GM and HM; a slot of equal rates adds its value to all three means.
struct SlotStructure {
    bool gm_may_equal_hm = true; // every slot has a zero or is all-equal
    bool gm_may_equal_am = true; // every slot is all-equal
};

SlotStructure slot_structure(const RateGrid& g)
{
    SlotStructure s;
    for (int t = 0; t < g.timeslots; ++t) {
        bool zero = false;
        bool equal = true;
        for (int i = 0; i < g.devices; ++i) {
            zero = zero || g.at(t, i) == 0.0;
            equal = equal && g.at(t, i) == g.at(t, 0);
        }
        s.gm_may_equal_hm = s.gm_may_equal_hm && (zero || equal);
        s.gm_may_equal_am = s.gm_may_equal_am && equal;
    }
    return s;
}

Outcome metric_inequalities()
{
    // Every record from the runs above, plus random grids.
    Rng rng(8);
    std::uniform_int_distribution<int> level(0, 5);
    static const double kLevels[] = {0.0, 0.2, 0.35, 0.6, 0.9, 1.18};
    std::vector<std::pair<MetricsRecord, RateGrid>> checked = g_records;
    const std::size_t from_runs = checked.size();
    for (int it = 0; it < 1000; ++it) {
        RateGrid g{1 + it % 20, 1 + it % 9, {}};
        for (int k = 0; k < g.timeslots * g.devices; ++k) {
            g.rates.push_back(kLevels[level(rng)]);
        }
        checked.emplace_back(compute_metrics(g), std::move(g));
    }
    int order = 0;
    int equal_unexplained = 0;
    int grid_mismatch = 0;
    for (const auto& [r, g] : checked) {
        order += (r.hm <= r.gm && r.gm <= r.am) ? 0 : 1;
        grid_mismatch += compute_metrics(g).gm == r.gm ? 0 : 1;
        const SlotStructure s = slot_structure(g);
        equal_unexplained += (r.hm == r.gm && !s.gm_may_equal_hm) ? 1 : 0;
        equal_unexplained += (r.gm == r.am && !s.gm_may_equal_am) ? 1 : 0;
    }
    return {order == 0 && equal_unexplained == 0 && grid_mismatch == 0,
            std::to_string(from_runs) + " run records + " + std::to_string(checked.size() - from_runs) +
                " random grids, " + std::to_string(order) + " out of order, " +
                std::to_string(equal_unexplained) + " equalities not explained by the slot structure, " +
                std::to_string(grid_mismatch) + " grid/record mismatches"};
}

Outcome latency_ordering()
{
    LatencyReport rep[3];
    const SchedulerKind kinds[] = {SchedulerKind::DqnIa, SchedulerKind::PgnIa, SchedulerKind::DdpgnIa};
    for (int k = 0; k < 3; ++k) {
        RunConfig c = tiny(kinds[k], true);
        rep[k] = measure_drl_latency(c, 30);
    }
    const bool ok = rep[0].train_step_ms < rep[2].train_step_ms && rep[0].train_step_ms < rep[1].train_step_ms &&
                    rep[0].test_step_ms < rep[0].train_step_ms && rep[1].test_step_ms < rep[1].train_step_ms &&
                    rep[2].test_step_ms < rep[2].train_step_ms;
    std::string d = "ms per timeslot (train / test / amortized incl. replay update):";
    const char* names[] = {" dqn ", "; pgn ", "; ddpgn "};
    for (int k = 0; k < 3; ++k) {
        d += names[k] + fmt("%.4f", rep[k].train_step_ms) + " / " + fmt("%.4f", rep[k].test_step_ms) + " / " +
             fmt("%.4f", rep[k].amortized_train_ms);
    }
    return {ok, d};
}

} // namespace

int main()
{
    struct Criterion {
        int id;
        const char* name;
        double budget_s; // 0: no runtime bound
        Outcome (*run)();
    };
    // Criterion 8 runs last so that it sees the records of every other run.
    const Criterion criteria[] = {
        {1, "rate functions", 1.0, rate_functions},
        {2, "gradient checks", 30.0, gradient_checks},
        {3, "fading statistics", 10.0, fading_statistics},
        {4, "solver feasibility", 120.0, solver_feasibility},
        {5, "ordering chain", 1800.0, ordering_chain},
        {6, "IA vs PA", 0.0, ia_vs_pa},
        {7, "reward identity", 0.0, reward_identity},
        {9, "determinism", 0.0, determinism},
        {10, "latency ordering", 0.0, latency_ordering},
        {8, "metric inequalities", 0.0, metric_inequalities},
    };
    std::vector<std::string> lines(11);
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string budget;
        if (c.budget_s > 0.0) {
            budget = " / limit " + fmt("%.0f s", c.budget_s);
            if (secs >= c.budget_s) {
                o.pass = false;
                o.detail += "; over the runtime limit";
            }
        }
        failed += o.pass ? 0 : 1;
        lines[static_cast<std::size_t>(c.id)] = std::string(o.pass ? "PASS" : "FAIL") + "  criterion " +
                                                std::to_string(c.id) + " (" + c.name + "): " + o.detail + " [" +
                                                fmt("%.2f s", secs) + budget + "]";
        std::fprintf(stderr, "done criterion %d\n", c.id);
    }
    for (int id = 1; id <= 10; ++id) {
        std::printf("%s\n", lines[static_cast<std::size_t>(id)].c_str());
    }
    std::printf("%d of 10 criteria failed\n", failed);
    return std::min(failed, 100);
}
