// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "iotsched/channel.hpp"
#include "iotsched/link_adaptation.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <vector>

namespace iotsched {

/// Log-domain joint SC/power/SINR problem for one (realization, timeslot).
///
/// Variables: P'(i,s) at index i*S+s, gamma'(i,s) at N*S + i*S+s.
/// Maximize sum_i LSE_s(log10(e) gamma'(i,s)) subject to
///   box      log eps_P <= P' <= log P_max, gamma_floor <= gamma' <= log gamma_max(i)
///   budget   LSE_s P'(i,s) <= log P_max                      (per device)
///   device   sum_s P'(i,s) <= (S-1) log eps_P                 (per device)
///   sc       sum_{i in b} P'(i,s) <= (n_b-1) log eps_P        (per SC and cell)
///   coupling gamma' - P' - log G_ii + log(N0 + I(i,s)) <= 0   (per device and SC)
/// The coupling row is the log of the posynomial SINR constraint written out.
struct TransformedProblem {
    int num_devices = 0;
    int num_sc = 0;
    int num_cells = 0;
    std::vector<int> cell_of;
    std::vector<Tech> tech;
    /// Linear gain of device j at site b, [j * num_cells + b].
    std::vector<double> gain;
    double noise_w = 0.0;
    double log_noise = 0.0;
    double log_pmax = 0.0;
    double log_eps_p = 0.0;
    /// Lower bound of gamma'; see build_transformed.
    double log_gamma_floor = 0.0;
    std::vector<double> log_gamma_max;

    int num_variables() const { return 2 * num_devices * num_sc; }
    int power_index(int i, int s) const { return i * num_sc + s; }
    int gamma_index(int i, int s) const { return num_devices * num_sc + i * num_sc + s; }
    double gain_at(int device, int site) const
    {
        return gain[static_cast<std::size_t>(device) * num_cells + site];
    }
    std::vector<int> devices_in_cell(int cell) const;

    int budget_constraints() const { return num_devices; }
    int device_exclusivity_constraints() const { return num_devices; }
    int sc_exclusivity_constraints() const { return num_sc * num_cells; }
    int coupling_constraints() const { return num_devices * num_sc; }
    int num_constraints() const
    {
        return budget_constraints() + device_exclusivity_constraints() +
               sc_exclusivity_constraints() + coupling_constraints();
    }

    /// Lower and upper box bounds of variable k.
    double lower(int k) const;
    double upper(int k) const;
    double objective(const std::vector<double>& x) const;
    /// All constraint values c(x) (feasible when <= 0) in the documented order.
    std::vector<double> constraints(const std::vector<double>& x) const;
};

/// Problem at timeslot `t`. The gamma' floor is the smaller of log eps_gamma and a
/// strict lower bound on any SINR reachable with every power in [eps_P, P_max],
/// so that a silent SC (power eps_P) always admits a feasible gamma'.
TransformedProblem build_transformed(const Realization& realization, int t, int num_sc,
                                     const McsCatalog& catalog, const PhyParams& phy = {});

/// Same from raw data: gains[j * cells + b], one cell id and tech per device.
TransformedProblem build_transformed(int num_sc, std::vector<int> cell_of, std::vector<Tech> tech,
                                     std::vector<double> gains, const McsCatalog& catalog,
                                     const PhyParams& phy = {});

struct SolverOptions {
    int starts = 8;
    int max_iter = 5000; // projected-gradient iterations per start, over all outer rounds
    double tol = 1e-6;
    int outer_iterations = 30;
    std::uint64_t seed = 1;
    /// Extra start from the round-robin, full-power pattern.
    bool round_robin_start = true;
};

enum class SolverStatus { Converged, MaxIter, Infeasible };

std::string_view to_string(SolverStatus s);

struct BenchmarkSolution {
    SolverStatus status = SolverStatus::Infeasible;
    std::vector<double> x;
    PowerAllocation powers;
    /// Linear SINR variables, [i * S + s].
    std::vector<double> sinrs;
    /// Per device: sum_s g(gamma_s).
    std::vector<double> ub_rates;
    std::vector<double> discrete_rates;
    /// Active SC per device after sparsification.
    std::vector<int> active_sc;
    double objective_value = 0.0;
    double residual = 0.0;
    int starts_converged = 0;
    /// Objective of every start, in start order (for spread reporting).
    std::vector<double> start_objectives;
};

/// Largest positive constraint value; box bounds included.
double residual(const TransformedProblem& problem, const std::vector<double>& x);

/// Residual of the untransformed problem with linear powers/SINRs, relative form.
double original_residual(const TransformedProblem& problem, const PowerAllocation& powers,
                         const std::vector<double>& sinrs);

/// Augmented Lagrangian with spectral projected gradient inner solves, multi-start.
/// Each start is followed by a restoration step that keeps the strongest SC per device,
/// resolves same-cell collisions, trims power above the SINR cap and sets gamma' just
/// below the achieved SINR, so a returned point is feasible unless status is Infeasible.
/// The restored SC pattern is then polished: per SC the remaining problem is a convex
/// GP, solved with the same loop. A start counts as converged when either loop does.
BenchmarkSolution solve_local(const TransformedProblem& problem, const SolverOptions& options = {},
                              const McsCatalog& catalog = default_mcs_catalog());

/// Benchmark-f: f(exp(gamma')) on the active SC per device.
std::vector<double> discretize_solution(const BenchmarkSolution& solution,
                                        const TransformedProblem& problem,
                                        const McsCatalog& catalog);

nlohmann::json problem_to_json(const TransformedProblem& problem);
nlohmann::json solution_to_json(const BenchmarkSolution& solution);

} // namespace iotsched
