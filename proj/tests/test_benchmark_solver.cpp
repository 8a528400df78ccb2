// SPDX-License-Identifier: Apache-2.0
#include "iotsched/benchmark_solver.hpp"
#include "support/oracles.hpp"

#include <catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

using namespace iotsched;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const McsCatalog& catalog()
{
    static const McsCatalog cat = default_mcs_catalog();
    return cat;
}

TransformedProblem single(double gain)
{
    return build_transformed(1, {0}, {Tech::NbIot}, {gain}, catalog());
}

SolverOptions quick(int starts = 3)
{
    SolverOptions o;
    o.starts = starts;
    return o;
}

/// Active SC count: SCs carrying more than 10 eps_P.
int active_count(const BenchmarkSolution& s, const TransformedProblem& p, int i)
{
    const double eps = std::exp(p.log_eps_p);
    int k = 0;
    for (int sc = 0; sc < p.num_sc; ++sc) {
        k += s.powers.at(i, sc) > 10.0 * eps ? 1 : 0;
    }
    return k;
}

TransformedProblem random_instance(std::uint64_t seed)
{
    const CellLayout layout = build_layout(2, 500.0, true);
    RealizationOptions opt;
    opt.timeslots = 1;
    opt.fading = false;
    const Realization r = realize(layout, place_devices(layout, 2, Tech::NbIot, derive_seed(seed, 1)), opt,
                                  derive_seed(seed, 2), derive_seed(seed, 3));
    return build_transformed(r, 0, 2, catalog());
}

} // namespace

TEST_CASE("problem dimensions", "[solver]")
{
    const TransformedProblem p =
        build_transformed(2, {0, 0}, {Tech::NbIot, Tech::NbIot}, {1e-10, 1e-11}, catalog());
    CHECK(p.num_variables() == 8);
    CHECK(p.budget_constraints() == 2);
    CHECK(p.device_exclusivity_constraints() == 2);
    CHECK(p.sc_exclusivity_constraints() == 2);
    CHECK(p.coupling_constraints() == 4);
    CHECK(p.num_constraints() == 10);
    const std::vector<double> x(8, -5.0);
    CHECK(p.constraints(x).size() == 10);
    CHECK(p.power_index(1, 1) == 3);
    CHECK(p.gamma_index(0, 1) == 5);

    const TransformedProblem two_cells = random_instance(1);
    CHECK(two_cells.num_cells == 2);
    CHECK(two_cells.sc_exclusivity_constraints() == 4);
    CHECK(two_cells.num_constraints() == 4 + 4 + 4 + 8);

    CHECK_THROWS_AS(build_transformed(0, {0}, {Tech::NbIot}, {1.0}, catalog()), ConfigError);
    CHECK_THROWS_AS(build_transformed(1, {0, 1}, {Tech::NbIot, Tech::NbIot}, {1.0}, catalog()), ConfigError);
}

TEST_CASE("single link coupling row reduces to the SNR bound", "[solver]")
{
    const double g = 1e-12;
    const TransformedProblem p = single(g);
    const PhyParams phy;
    for (double pw : {-20.0, -5.0, -2.0}) {
        for (double gp : {-1.0, 0.0, 0.2}) {
            const std::vector<double> x{pw, gp};
            const auto c = p.constraints(x);
            REQUIRE(c.size() == 4);
            CHECK_THAT(c[3], WithinAbs(gp - pw - std::log(g) + std::log(phy.noise_w()), 1e-12));
            CHECK_THAT(c[0], WithinAbs(pw - p.log_pmax, 1e-12));
            CHECK_THAT(c[1], WithinAbs(pw, 1e-12));
            CHECK_THAT(c[2], WithinAbs(pw, 1e-12));
            CHECK_THAT(p.objective(x), WithinAbs(kLog10E * gp, 1e-12));
        }
    }
    // gamma' floor is usable by any SC at eps_P.
    CHECK(p.log_gamma_floor <= std::log(0.1));
    CHECK(p.log_gamma_floor < std::log(phy.eps_power_w * g / phy.noise_w()));
}

TEST_CASE("single link closed form", "[solver]")
{
    const PhyParams phy;
    const double gmax = catalog().at(Tech::NbIot).gamma_max;
    const double capped_gain = 1e-13;                          // SNR at P_max far above gamma_max
    const double limited_gain = 0.5 * gmax * phy.noise_w() / phy.pmax_w(); // SNR at P_max = gmax / 2
    for (double g : {capped_gain, limited_gain}) {
        CAPTURE(g);
        const TransformedProblem p = single(g);
        const BenchmarkSolution s = solve_local(p, quick());
        REQUIRE(s.status == SolverStatus::Converged);
        const double expect = oracle::single_link_log_sinr(phy.pmax_w(), g, phy.noise_w(), gmax);
        CHECK_THAT(s.sinrs[0], WithinRel(std::exp(expect), 1e-6));
        CHECK_THAT(s.objective_value, WithinRel(kLog10E * expect, 1e-6));
        CHECK(s.residual <= 1e-6);
        CHECK(s.active_sc == std::vector<int>{0});
    }
    const BenchmarkSolution lim = solve_local(single(limited_gain), quick());
    CHECK_THAT(lim.powers.at(0, 0), WithinRel(phy.pmax_w(), 1e-6));
    CHECK(lim.discrete_rates[0] == discrete_rate_f(0.5 * gmax, catalog().at(Tech::NbIot)));
    const BenchmarkSolution cap = solve_local(single(capped_gain), quick());
    CHECK(cap.discrete_rates[0] == catalog().at(Tech::NbIot).beta_max());
}

TEST_CASE("zero cross gain separates the devices", "[solver]")
{
    const PhyParams phy;
    const double gmax = catalog().at(Tech::NbIot).gamma_max;
    const double g0 = 0.3 * gmax * phy.noise_w() / phy.pmax_w();
    const double g1 = 0.7 * gmax * phy.noise_w() / phy.pmax_w();
    const TransformedProblem p =
        build_transformed(1, {0, 1}, {Tech::NbIot, Tech::NbIot}, {g0, 0.0, 0.0, g1}, catalog());
    const BenchmarkSolution s = solve_local(p, quick());
    REQUIRE(s.status == SolverStatus::Converged);
    CHECK_THAT(s.sinrs[0], WithinRel(0.3 * gmax, 1e-6));
    CHECK_THAT(s.sinrs[1], WithinRel(0.7 * gmax, 1e-6));
}

TEST_CASE("symmetric devices end up on orthogonal SCs", "[solver]")
{
    const PhyParams phy;
    const double gmax = catalog().at(Tech::NbIot).gamma_max;
    const double g = 0.5 * gmax * phy.noise_w() / phy.pmax_w();
    const double cross = 0.5 * g;
    const TransformedProblem p =
        build_transformed(2, {0, 1}, {Tech::NbIot, Tech::NbIot}, {g, cross, cross, g}, catalog());
    const BenchmarkSolution s = solve_local(p, quick());
    REQUIRE(s.status != SolverStatus::Infeasible);
    CHECK(s.active_sc[0] != s.active_sc[1]);
    CHECK_THAT(s.ub_rates[0], WithinRel(s.ub_rates[1], 1e-6));
    // The silent SC at eps_P still adds g(gamma) ~ (1e-11)^0.43 to each device's sum.
    CHECK_THAT(s.objective_value, WithinAbs(2.0 * kLog10E * std::log(0.5 * gmax), 1e-4));
    CHECK(s.objective_value > 2.0 * kLog10E * std::log(0.5 * gmax));

    // Relabeling the devices leaves the optimum unchanged.
    const TransformedProblem q =
        build_transformed(2, {1, 0}, {Tech::NbIot, Tech::NbIot}, {cross, g, g, cross}, catalog());
    CHECK_THAT(solve_local(q, quick()).objective_value, WithinRel(s.objective_value, 1e-5));
}

TEST_CASE("solutions are feasible and sparse", "[solver]")
{
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const TransformedProblem p = random_instance(seed);
        const BenchmarkSolution s = solve_local(p, quick(4));
        REQUIRE(s.status != SolverStatus::Infeasible);
        CHECK(s.residual <= 1e-6);
        CHECK(residual(p, s.x) <= 1e-6);
        CHECK(s.start_objectives.size() == 5);
        for (int i = 0; i < p.num_devices; ++i) {
            CHECK(active_count(s, p, i) <= 1);
            CHECK(s.ub_rates[i] >= s.discrete_rates[i]);
            const McsTable& t = catalog().at(p.tech[i]);
            CHECK(s.discrete_rates[i] <= t.beta_max());
        }
        if (s.status == SolverStatus::Converged) {
            CHECK(original_residual(p, s.powers, s.sinrs) <= 1e-6);
        }
    }
}

TEST_CASE("more starts never lower the objective", "[solver]")
{
    const TransformedProblem p = random_instance(11);
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 4; ++k) {
        const BenchmarkSolution s = solve_local(p, quick(k));
        REQUIRE(s.status != SolverStatus::Infeasible);
        CHECK(s.objective_value >= prev);
        prev = s.objective_value;
    }
    CHECK_THROWS_AS(solve_local(p, quick(0)), ConfigError);
}

TEST_CASE("discretization at level boundaries", "[solver]")
{
    const TransformedProblem p = single(1e-13);
    BenchmarkSolution s = solve_local(p, quick(1));
    const McsTable& t = catalog().at(Tech::NbIot);
    s.x[1] = std::log(t.thresholds[2]);
    CHECK(discretize_solution(s, p, catalog())[0] == t.efficiencies[2]);
    s.x[1] = std::log(t.thresholds[2]) - 1e-6;
    CHECK(discretize_solution(s, p, catalog())[0] == t.efficiencies[1]);
    s.x[1] = std::log(t.thresholds[0]) - 0.1;
    CHECK(discretize_solution(s, p, catalog())[0] == 0.0);
    s.status = SolverStatus::Infeasible;
    CHECK_THROWS_AS(discretize_solution(s, p, catalog()), ContractViolation);
}

TEST_CASE("problem and solution dumps", "[solver]")
{
    const TransformedProblem p = random_instance(3);
    const nlohmann::json pj = problem_to_json(p);
    CHECK(pj.at("format") == "iotsched.gp_problem");
    CHECK(pj.at("gain").size() == p.gain.size());
    const BenchmarkSolution s = solve_local(p, quick(1));
    const nlohmann::json sj = solution_to_json(s);
    CHECK(sj.at("x").size() == static_cast<std::size_t>(p.num_variables()));
    CHECK(sj.at("status") == std::string(to_string(s.status)));
    CHECK(to_string(SolverStatus::Infeasible) == "infeasible");
}
