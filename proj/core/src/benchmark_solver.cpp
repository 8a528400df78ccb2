// SPDX-License-Identifier: Apache-2.0
#include "iotsched/benchmark_solver.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace iotsched {

namespace {

constexpr double kShadowMargin = 1e-9; // log-domain gap kept below the achieved SINR

double log_sum_exp(const double* v, int n, int stride = 1)
{
    double m = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
        m = std::max(m, v[k * stride]);
    }
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        acc += std::exp(v[k * stride] - m);
    }
    return m + std::log(acc);
}

/// Interference I(i,s) at device i's site from every other transmitter on s.
std::vector<double> interference(const TransformedProblem& p, const std::vector<double>& power)
{
    const int n = p.num_devices;
    const int sc = p.num_sc;
    std::vector<double> out(static_cast<std::size_t>(n) * sc, 0.0);
    for (int i = 0; i < n; ++i) {
        const int b = p.cell_of[i];
        for (int s = 0; s < sc; ++s) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j != i) {
                    acc += power[static_cast<std::size_t>(j) * sc + s] * p.gain_at(j, b);
                }
            }
            out[static_cast<std::size_t>(i) * sc + s] = acc;
        }
    }
    return out;
}

class AugmentedLagrangian {
public:
    explicit AugmentedLagrangian(const TransformedProblem& p) : p_(p)
    {
        for (int b = 0; b < p.num_cells; ++b) {
            members_.push_back(p.devices_in_cell(b));
        }
        lambda_.assign(static_cast<std::size_t>(p.num_constraints()), 0.0);
    }

    std::vector<double>& lambda() { return lambda_; }
    double& mu() { return mu_; }

    double value_and_gradient(const std::vector<double>& x, std::vector<double>& g) const
    {
        const int n = p_.num_devices;
        const int sc = p_.num_sc;
        const int cells = p_.num_cells;
        const std::size_t ns = static_cast<std::size_t>(n) * sc;
        g.assign(x.size(), 0.0);
        double value = 0.0;
        std::size_t k = 0;

        // objective: maximize sum_i LSE_s(kappa gamma')
        for (int i = 0; i < n; ++i) {
            const double* gi = &x[ns + static_cast<std::size_t>(i) * sc];
            double m = -std::numeric_limits<double>::infinity();
            for (int s = 0; s < sc; ++s) {
                m = std::max(m, kLog10E * gi[s]);
            }
            double acc = 0.0;
            for (int s = 0; s < sc; ++s) {
                acc += std::exp(kLog10E * gi[s] - m);
            }
            value -= m + std::log(acc);
            for (int s = 0; s < sc; ++s) {
                g[ns + static_cast<std::size_t>(i) * sc + s] -=
                    kLog10E * std::exp(kLog10E * gi[s] - m) / acc;
            }
        }

        // budget
        for (int i = 0; i < n; ++i, ++k) {
            const double* pi = &x[static_cast<std::size_t>(i) * sc];
            const double lse = log_sum_exp(pi, sc);
            const double w = penalty(k, lse - p_.log_pmax, value);
            if (w > 0.0) {
                for (int s = 0; s < sc; ++s) {
                    g[static_cast<std::size_t>(i) * sc + s] += w * std::exp(pi[s] - lse);
                }
            }
        }
        // device exclusivity
        for (int i = 0; i < n; ++i, ++k) {
            double sum = 0.0;
            for (int s = 0; s < sc; ++s) {
                sum += x[static_cast<std::size_t>(i) * sc + s];
            }
            const double w = penalty(k, sum - (sc - 1) * p_.log_eps_p, value);
            if (w > 0.0) {
                for (int s = 0; s < sc; ++s) {
                    g[static_cast<std::size_t>(i) * sc + s] += w;
                }
            }
        }
        // SC exclusivity within each cell
        for (int s = 0; s < sc; ++s) {
            for (int b = 0; b < cells; ++b, ++k) {
                const auto& mem = members_[static_cast<std::size_t>(b)];
                double sum = 0.0;
                for (int i : mem) {
                    sum += x[static_cast<std::size_t>(i) * sc + s];
                }
                const double bound = (static_cast<double>(mem.size()) - 1.0) * p_.log_eps_p;
                const double w = penalty(k, sum - bound, value);
                if (w > 0.0) {
                    for (int i : mem) {
                        g[static_cast<std::size_t>(i) * sc + s] += w;
                    }
                }
            }
        }

        // coupling
        power_.resize(ns);
        for (std::size_t q = 0; q < ns; ++q) {
            power_[q] = std::exp(x[q]);
        }
        total_.assign(static_cast<std::size_t>(cells) * sc, 0.0);
        for (int j = 0; j < n; ++j) {
            for (int b = 0; b < cells; ++b) {
                const double gjb = p_.gain_at(j, b);
                for (int s = 0; s < sc; ++s) {
                    total_[static_cast<std::size_t>(b) * sc + s] +=
                        power_[static_cast<std::size_t>(j) * sc + s] * gjb;
                }
            }
        }
        weight_.assign(ns, 0.0);
        denom_.assign(ns, 0.0);
        acc_.assign(static_cast<std::size_t>(cells) * sc, 0.0);
        for (int i = 0; i < n; ++i) {
            const int b = p_.cell_of[i];
            const double gii = p_.gain_at(i, b);
            for (int s = 0; s < sc; ++s, ++k) {
                const std::size_t q = static_cast<std::size_t>(i) * sc + s;
                const double inter =
                    std::max(0.0, total_[static_cast<std::size_t>(b) * sc + s] - power_[q] * gii);
                const double den = p_.noise_w + inter;
                const double c = x[ns + q] - x[q] - std::log(gii) + std::log(den);
                const double w = penalty(k, c, value);
                weight_[q] = w;
                denom_[q] = den;
                if (w > 0.0) {
                    g[ns + q] += w;
                    g[q] -= w;
                    acc_[static_cast<std::size_t>(b) * sc + s] += w / den;
                }
            }
        }
        for (int j = 0; j < n; ++j) {
            const int bj = p_.cell_of[j];
            for (int s = 0; s < sc; ++s) {
                const std::size_t q = static_cast<std::size_t>(j) * sc + s;
                double sum = 0.0;
                for (int b = 0; b < cells; ++b) {
                    sum += p_.gain_at(j, b) * acc_[static_cast<std::size_t>(b) * sc + s];
                }
                if (weight_[q] > 0.0) {
                    sum -= p_.gain_at(j, bj) * weight_[q] / denom_[q];
                }
                g[q] += power_[q] * sum;
            }
        }
        return value;
    }

private:
    // Adds the penalty term for constraint k with value c; returns its derivative weight.
    double penalty(std::size_t k, double c, double& value) const
    {
        const double l = lambda_[k];
        const double t = std::max(0.0, l + mu_ * c);
        value += (t * t - l * l) / (2.0 * mu_);
        return t;
    }

    const TransformedProblem& p_;
    std::vector<std::vector<int>> members_;
    std::vector<double> lambda_;
    double mu_ = 10.0;
    mutable std::vector<double> power_, total_, weight_, denom_, acc_;
};

double projected_gradient_norm(const TransformedProblem& p, const std::vector<double>& x,
                               const std::vector<double>& g)
{
    double m = 0.0;
    for (int k = 0; k < p.num_variables(); ++k) {
        const auto q = static_cast<std::size_t>(k);
        const double step = std::clamp(x[q] - g[q], p.lower(k), p.upper(k)) - x[q];
        m = std::max(m, std::abs(step));
    }
    return m;
}

/// Spectral projected gradient with a nonmonotone Armijo search. Returns true when
/// the projected gradient drops below `tol`; each iteration consumes one unit of `budget`.
bool spg_minimize(const TransformedProblem& p, const AugmentedLagrangian& al,
                  std::vector<double>& x, int& budget, double tol)
{
    constexpr int kMemory = 10;
    constexpr double kAlphaMin = 1e-10;
    constexpr double kAlphaMax = 1e3;
    const std::size_t nv = x.size();

    std::vector<double> g, g_new, x_new(nv), d(nv);
    double f = al.value_and_gradient(x, g);
    std::deque<double> history{f};
    double pg = projected_gradient_norm(p, x, g);
    double alpha = std::clamp(1.0 / std::max(pg, 1e-12), kAlphaMin, kAlphaMax);

    for (; budget > 0; --budget) {
        if (pg <= tol) {
            return true;
        }
        for (std::size_t q = 0; q < nv; ++q) {
            const int k = static_cast<int>(q);
            d[q] = std::clamp(x[q] - alpha * g[q], p.lower(k), p.upper(k)) - x[q];
        }
        double gd = 0.0;
        for (std::size_t q = 0; q < nv; ++q) {
            gd += g[q] * d[q];
        }
        const double f_ref = *std::max_element(history.begin(), history.end());
        double t = 1.0;
        double f_new = 0.0;
        for (int bt = 0; bt < 50; ++bt) {
            for (std::size_t q = 0; q < nv; ++q) {
                x_new[q] = x[q] + t * d[q];
            }
            f_new = al.value_and_gradient(x_new, g_new);
            if (f_new <= f_ref + 1e-4 * t * gd) {
                break;
            }
            t *= 0.5;
        }
        double ss = 0.0;
        double sy = 0.0;
        for (std::size_t q = 0; q < nv; ++q) {
            const double s = x_new[q] - x[q];
            ss += s * s;
            sy += s * (g_new[q] - g[q]);
        }
        alpha = sy > 0.0 ? std::clamp(ss / sy, kAlphaMin, kAlphaMax) : kAlphaMax;
        x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        history.push_back(f);
        if (history.size() > kMemory) {
            history.pop_front();
        }
        pg = projected_gradient_norm(p, x, g);
        if (ss == 0.0) {
            return pg <= tol;
        }
    }
    return pg <= tol;
}

struct Restored {
    std::vector<double> x;
    std::vector<int> active;
};

/// Sparsify to one SC per device and one device per (cell, SC), then set gamma'
/// from the SINRs actually achieved.
Restored restore(const TransformedProblem& p, const std::vector<double>& x_in)
{
    const int n = p.num_devices;
    const int sc = p.num_sc;
    const std::size_t ns = static_cast<std::size_t>(n) * sc;
    const double eps = std::exp(p.log_eps_p);
    const double pmax = std::exp(p.log_pmax);
    const double p_active_max = pmax - (sc - 1) * eps;

    std::vector<int> active(static_cast<std::size_t>(n), 0);
    std::vector<double> act_power(static_cast<std::size_t>(n), eps);
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int s = 1; s < sc; ++s) {
            if (x_in[static_cast<std::size_t>(i) * sc + s] > x_in[static_cast<std::size_t>(i) * sc + best]) {
                best = s;
            }
        }
        active[static_cast<std::size_t>(i)] = best;
        act_power[static_cast<std::size_t>(i)] =
            std::clamp(std::exp(x_in[static_cast<std::size_t>(i) * sc + best]), eps, p_active_max);
    }

    auto power_matrix = [&]() {
        std::vector<double> pw(ns, eps);
        for (int i = 0; i < n; ++i) {
            pw[static_cast<std::size_t>(i) * sc + active[static_cast<std::size_t>(i)]] =
                act_power[static_cast<std::size_t>(i)];
        }
        return pw;
    };

    // Same-cell collisions: the weaker received signal moves to the free SC where it
    // sees the best SINR, or goes silent when the cell has no free SC.
    for (int b = 0; b < p.num_cells; ++b) {
        const auto members = p.devices_in_cell(b);
        for (int s = 0; s < sc; ++s) {
            std::vector<int> on;
            for (int i : members) {
                if (active[static_cast<std::size_t>(i)] == s &&
                    act_power[static_cast<std::size_t>(i)] > eps) {
                    on.push_back(i);
                }
            }
            if (on.size() < 2) {
                continue;
            }
            std::sort(on.begin(), on.end(), [&](int a, int c) {
                const double ra = act_power[static_cast<std::size_t>(a)] * p.gain_at(a, b);
                const double rc = act_power[static_cast<std::size_t>(c)] * p.gain_at(c, b);
                return ra != rc ? ra > rc : a < c;
            });
            for (std::size_t k = 1; k < on.size(); ++k) {
                const int i = on[k];
                std::vector<bool> used(static_cast<std::size_t>(sc), false);
                for (int j : members) {
                    if (j != i && act_power[static_cast<std::size_t>(j)] > eps) {
                        used[static_cast<std::size_t>(active[static_cast<std::size_t>(j)])] = true;
                    }
                }
                const auto pw = power_matrix();
                const auto inter = interference(p, pw);
                int target = -1;
                double best = -1.0;
                for (int s2 = 0; s2 < sc; ++s2) {
                    if (used[static_cast<std::size_t>(s2)]) {
                        continue;
                    }
                    const double sinr = 1.0 / (p.noise_w + inter[static_cast<std::size_t>(i) * sc + s2]);
                    if (sinr > best) {
                        best = sinr;
                        target = s2;
                    }
                }
                if (target >= 0) {
                    active[static_cast<std::size_t>(i)] = target;
                } else {
                    act_power[static_cast<std::size_t>(i)] = eps;
                }
            }
        }
    }

    // Trim power that only overshoots the SINR cap; lowering one transmitter never
    // hurts anyone else.
    for (int pass = 0; pass < 3; ++pass) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            const auto pw = power_matrix();
            const int s = active[static_cast<std::size_t>(i)];
            const int b = p.cell_of[static_cast<std::size_t>(i)];
            double inter = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j != i) {
                    inter += pw[static_cast<std::size_t>(j) * sc + s] * p.gain_at(j, b);
                }
            }
            const double target =
                std::exp(p.log_gamma_max[static_cast<std::size_t>(i)] + 2.0 * kShadowMargin);
            const double needed = target * (p.noise_w + inter) / p.gain_at(i, b);
            const double cur = act_power[static_cast<std::size_t>(i)];
            if (needed < cur * (1.0 - 1e-12)) {
                act_power[static_cast<std::size_t>(i)] = std::max(eps, needed);
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
    }

    Restored out;
    out.active = active;
    out.x.assign(2 * ns, 0.0);
    const auto pw = power_matrix();
    const auto inter = interference(p, pw);
    for (int i = 0; i < n; ++i) {
        const int b = p.cell_of[static_cast<std::size_t>(i)];
        for (int s = 0; s < sc; ++s) {
            const std::size_t q = static_cast<std::size_t>(i) * sc + s;
            out.x[q] = std::log(pw[q]);
            const double log_sinr = std::log(pw[q] * p.gain_at(i, b)) - std::log(p.noise_w + inter[q]);
            out.x[ns + q] = std::clamp(log_sinr - kShadowMargin, p.log_gamma_floor,
                                       p.log_gamma_max[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

std::vector<double> random_start(const TransformedProblem& p, Rng& rng)
{
    const int n = p.num_devices;
    const int sc = p.num_sc;
    std::vector<double> x(static_cast<std::size_t>(p.num_variables()));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double p_hi = p.log_pmax - std::log(static_cast<double>(sc));
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < sc; ++s) {
            x[static_cast<std::size_t>(p.power_index(i, s))] =
                p.log_eps_p + (p_hi - p.log_eps_p) * unit(rng);
            const double g_hi = p.log_gamma_max[static_cast<std::size_t>(i)];
            x[static_cast<std::size_t>(p.gamma_index(i, s))] =
                p.log_gamma_floor + (g_hi - p.log_gamma_floor) * unit(rng);
        }
    }
    return x;
}

std::vector<double> round_robin_start(const TransformedProblem& p)
{
    const int sc = p.num_sc;
    std::vector<double> x(static_cast<std::size_t>(p.num_variables()), p.log_eps_p);
    std::vector<int> next(static_cast<std::size_t>(p.num_cells), 0);
    for (int i = 0; i < p.num_devices; ++i) {
        const int s = next[static_cast<std::size_t>(p.cell_of[static_cast<std::size_t>(i)])]++ % sc;
        x[static_cast<std::size_t>(p.power_index(i, s))] =
            std::log(std::exp(p.log_pmax) - (sc - 1) * std::exp(p.log_eps_p));
    }
    return restore(p, x).x;
}

/// Outer augmented-Lagrangian loop from `x` (updated in place), sharing `max_iter`
/// inner iterations across all rounds. True when the violation and the inner
/// projected gradient both reach the tolerances.
bool run_augmented_lagrangian(const TransformedProblem& p, std::vector<double>& x, const SolverOptions& options)
{
    AugmentedLagrangian al(p);
    double inner_tol = 1e-2;
    double prev_violation = std::numeric_limits<double>::infinity();
    int budget = options.max_iter;
    for (int outer = 0; outer < options.outer_iterations; ++outer) {
        const bool inner_ok = spg_minimize(p, al, x, budget, inner_tol);
        const auto c = p.constraints(x);
        double violation = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) {
            violation = std::max(violation, c[k]);
            al.lambda()[k] = std::max(0.0, al.lambda()[k] + al.mu() * c[k]);
        }
        if (violation <= options.tol && inner_ok && inner_tol <= 1e-6) {
            return true;
        }
        if (violation > 0.25 * prev_violation) {
            al.mu() = std::min(al.mu() * 10.0, 1e8);
        }
        prev_violation = violation;
        inner_tol = std::max(1e-6, inner_tol * 0.1);
    }
    return false;
}

/// With the SC pattern of `rest` fixed, each SC is a separate single-SC problem whose
/// objective is linear in gamma', i.e. a convex GP. Solves those and keeps the
/// result when it restores to a better feasible point. True when every subproblem
/// converged.
bool polish(const TransformedProblem& p, Restored& rest, const SolverOptions& options)
{
    const int n = p.num_devices;
    const int sc = p.num_sc;
    const std::size_t ns = static_cast<std::size_t>(n) * sc;
    const double eps = std::exp(p.log_eps_p);
    const double log_active_max = std::log(std::exp(p.log_pmax) - (sc - 1) * eps);

    std::vector<double> x = rest.x;
    bool all_converged = true;
    for (int s = 0; s < sc; ++s) {
        std::vector<int> on;
        for (int i = 0; i < n; ++i) {
            if (rest.active[static_cast<std::size_t>(i)] == s &&
                rest.x[static_cast<std::size_t>(i) * sc + s] > p.log_eps_p) {
                on.push_back(i);
            }
        }
        if (on.empty()) {
            continue;
        }
        TransformedProblem sub;
        sub.num_devices = static_cast<int>(on.size());
        sub.num_sc = 1;
        sub.num_cells = p.num_cells;
        sub.noise_w = p.noise_w;
        sub.log_noise = p.log_noise;
        sub.log_pmax = log_active_max;
        sub.log_eps_p = p.log_eps_p;
        sub.log_gamma_floor = p.log_gamma_floor;
        for (int i : on) {
            sub.cell_of.push_back(p.cell_of[static_cast<std::size_t>(i)]);
            sub.tech.push_back(p.tech[static_cast<std::size_t>(i)]);
            sub.log_gamma_max.push_back(p.log_gamma_max[static_cast<std::size_t>(i)]);
            for (int b = 0; b < p.num_cells; ++b) {
                sub.gain.push_back(p.gain_at(i, b));
            }
        }
        std::vector<double> y(2 * on.size());
        for (std::size_t k = 0; k < on.size(); ++k) {
            const std::size_t q = static_cast<std::size_t>(on[k]) * sc + s;
            y[k] = std::min(rest.x[q], log_active_max);
            y[on.size() + k] = rest.x[ns + q];
        }
        if (!run_augmented_lagrangian(sub, y, options)) {
            all_converged = false;
        }
        for (std::size_t k = 0; k < on.size(); ++k) {
            x[static_cast<std::size_t>(on[k]) * sc + s] = std::clamp(y[k], p.log_eps_p, log_active_max);
        }
    }
    Restored polished = restore(p, x);
    if (residual(p, polished.x) <= options.tol && p.objective(polished.x) >= p.objective(rest.x)) {
        rest = std::move(polished);
        return all_converged;
    }
    return false;
}

} // namespace

std::vector<int> TransformedProblem::devices_in_cell(int cell) const
{
    std::vector<int> out;
    for (int i = 0; i < num_devices; ++i) {
        if (cell_of[static_cast<std::size_t>(i)] == cell) {
            out.push_back(i);
        }
    }
    return out;
}

double TransformedProblem::lower(int k) const
{
    return k < num_devices * num_sc ? log_eps_p : log_gamma_floor;
}

double TransformedProblem::upper(int k) const
{
    if (k < num_devices * num_sc) {
        return log_pmax;
    }
    return log_gamma_max[static_cast<std::size_t>((k - num_devices * num_sc) / num_sc)];
}

double TransformedProblem::objective(const std::vector<double>& x) const
{
    double sum = 0.0;
    std::vector<double> v(static_cast<std::size_t>(num_sc));
    for (int i = 0; i < num_devices; ++i) {
        for (int s = 0; s < num_sc; ++s) {
            v[static_cast<std::size_t>(s)] = kLog10E * x[static_cast<std::size_t>(gamma_index(i, s))];
        }
        sum += log_sum_exp(v.data(), num_sc);
    }
    return sum;
}

std::vector<double> TransformedProblem::constraints(const std::vector<double>& x) const
{
    const int n = num_devices;
    const int sc = num_sc;
    std::vector<double> c;
    c.reserve(static_cast<std::size_t>(num_constraints()));
    for (int i = 0; i < n; ++i) {
        c.push_back(log_sum_exp(&x[static_cast<std::size_t>(i) * sc], sc) - log_pmax);
    }
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int s = 0; s < sc; ++s) {
            sum += x[static_cast<std::size_t>(i) * sc + s];
        }
        c.push_back(sum - (sc - 1) * log_eps_p);
    }
    for (int s = 0; s < sc; ++s) {
        for (int b = 0; b < num_cells; ++b) {
            const auto mem = devices_in_cell(b);
            double sum = 0.0;
            for (int i : mem) {
                sum += x[static_cast<std::size_t>(i) * sc + s];
            }
            c.push_back(sum - (static_cast<double>(mem.size()) - 1.0) * log_eps_p);
        }
    }
    std::vector<double> pw(static_cast<std::size_t>(n) * sc);
    for (std::size_t q = 0; q < pw.size(); ++q) {
        pw[q] = std::exp(x[q]);
    }
    const auto inter = interference(*this, pw);
    const std::size_t ns = pw.size();
    for (int i = 0; i < n; ++i) {
        const double gii = gain_at(i, cell_of[static_cast<std::size_t>(i)]);
        for (int s = 0; s < sc; ++s) {
            const std::size_t q = static_cast<std::size_t>(i) * sc + s;
            c.push_back(x[ns + q] - x[q] - std::log(gii) + std::log(noise_w + inter[q]));
        }
    }
    return c;
}

TransformedProblem build_transformed(int num_sc, std::vector<int> cell_of, std::vector<Tech> tech,
                                     std::vector<double> gains, const McsCatalog& catalog,
                                     const PhyParams& phy)
{
    TransformedProblem p;
    p.num_devices = static_cast<int>(cell_of.size());
    p.num_sc = num_sc;
    if (num_sc < 1 || p.num_devices < 1 || tech.size() != cell_of.size()) {
        throw ConfigError("transformed problem needs devices, SCs and one tech per device");
    }
    p.num_cells = *std::max_element(cell_of.begin(), cell_of.end()) + 1;
    if (gains.size() != static_cast<std::size_t>(p.num_devices) * p.num_cells) {
        throw ConfigError("gain matrix must be devices x cells");
    }
    p.cell_of = std::move(cell_of);
    p.tech = std::move(tech);
    p.gain = std::move(gains);
    p.noise_w = phy.noise_w();
    p.log_noise = std::log(p.noise_w);
    p.log_pmax = std::log(phy.pmax_w());
    p.log_eps_p = std::log(phy.eps_power_w);

    double floor = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p.num_devices; ++i) {
        const McsTable& table = catalog.at(p.tech[static_cast<std::size_t>(i)]);
        p.log_gamma_max.push_back(std::log(table.gamma_max));
        floor = std::min(floor, std::log(table.gamma_min));
        const int b = p.cell_of[static_cast<std::size_t>(i)];
        double worst = p.noise_w;
        for (int j = 0; j < p.num_devices; ++j) {
            if (j != i) {
                worst += phy.pmax_w() * p.gain_at(j, b);
            }
        }
        floor = std::min(floor, std::log(0.5 * phy.eps_power_w * p.gain_at(i, b) / worst));
    }
    p.log_gamma_floor = floor;
    return p;
}

TransformedProblem build_transformed(const Realization& r, int t, int num_sc,
                                     const McsCatalog& catalog, const PhyParams& phy)
{
    const int n = r.num_devices();
    const int cells = r.num_sites();
    std::vector<int> cell_of;
    std::vector<Tech> tech;
    std::vector<double> gains(static_cast<std::size_t>(n) * cells);
    for (int i = 0; i < n; ++i) {
        cell_of.push_back(r.devices[static_cast<std::size_t>(i)].cell_id);
        tech.push_back(r.devices[static_cast<std::size_t>(i)].tech);
        for (int b = 0; b < cells; ++b) {
            gains[static_cast<std::size_t>(i) * cells + b] = r.gain(t, i, b);
        }
    }
    TransformedProblem p =
        build_transformed(num_sc, std::move(cell_of), std::move(tech), std::move(gains), catalog, phy);
    // Cells without devices still count as sites.
    if (p.num_cells < cells) {
        p.num_cells = cells;
    }
    return p;
}

std::string_view to_string(SolverStatus s)
{
    switch (s) {
    case SolverStatus::Converged:
        return "converged";
    case SolverStatus::MaxIter:
        return "max_iter";
    case SolverStatus::Infeasible:
        return "infeasible";
    }
    return "unknown";
}

double residual(const TransformedProblem& p, const std::vector<double>& x)
{
    double r = 0.0;
    for (int k = 0; k < p.num_variables(); ++k) {
        const double v = x[static_cast<std::size_t>(k)];
        r = std::max({r, p.lower(k) - v, v - p.upper(k)});
    }
    for (double c : p.constraints(x)) {
        r = std::max(r, c);
    }
    return r;
}

double original_residual(const TransformedProblem& p, const PowerAllocation& pw,
                         const std::vector<double>& sinrs)
{
    const int n = p.num_devices;
    const int sc = p.num_sc;
    const double eps = std::exp(p.log_eps_p);
    const double pmax = std::exp(p.log_pmax);
    const double gamma_floor = std::exp(p.log_gamma_floor);
    double r = 0.0;
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        double log_prod = 0.0;
        for (int s = 0; s < sc; ++s) {
            const double v = pw.at(i, s);
            r = std::max({r, (eps - v) / eps, (v - pmax) / pmax});
            sum += v;
            log_prod += std::log(v);
        }
        r = std::max(r, (sum - pmax) / pmax);
        r = std::max(r, std::expm1(log_prod - (sc - 1) * p.log_eps_p));
    }
    for (int s = 0; s < sc; ++s) {
        for (int b = 0; b < p.num_cells; ++b) {
            const auto mem = p.devices_in_cell(b);
            double log_prod = 0.0;
            for (int i : mem) {
                log_prod += std::log(pw.at(i, s));
            }
            r = std::max(r, std::expm1(log_prod - (static_cast<double>(mem.size()) - 1.0) * p.log_eps_p));
        }
    }
    const auto inter = interference(p, pw.watts);
    for (int i = 0; i < n; ++i) {
        const int b = p.cell_of[static_cast<std::size_t>(i)];
        const double gmax = std::exp(p.log_gamma_max[static_cast<std::size_t>(i)]);
        for (int s = 0; s < sc; ++s) {
            const std::size_t q = static_cast<std::size_t>(i) * sc + s;
            const double g = sinrs[q];
            r = std::max({r, (gamma_floor - g) / gamma_floor, (g - gmax) / gmax});
            const double signal = pw.at(i, s) * p.gain_at(i, b);
            r = std::max(r, (g * (p.noise_w + inter[q]) - signal) / signal);
        }
    }
    return r;
}

BenchmarkSolution solve_local(const TransformedProblem& p, const SolverOptions& options,
                              const McsCatalog& catalog)
{
    if (options.starts < 1) {
        throw ConfigError("solver needs at least one start");
    }
    const int n = p.num_devices;
    const int sc = p.num_sc;
    const std::size_t ns = static_cast<std::size_t>(n) * sc;

    BenchmarkSolution best;
    best.objective_value = -std::numeric_limits<double>::infinity();
    bool any_feasible = false;
    bool best_converged = false;
    const int total_starts = options.starts + (options.round_robin_start ? 1 : 0);

    for (int start = 0; start < total_starts; ++start) {
        std::vector<double> x;
        if (start < options.starts) {
            Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(start)));
            x = random_start(p, rng);
        } else {
            x = round_robin_start(p);
        }

        bool converged = run_augmented_lagrangian(p, x, options);
        Restored rest = restore(p, x);
        if (polish(p, rest, options)) {
            converged = true;
        }
        const double res = residual(p, rest.x);
        const double obj = p.objective(rest.x);
        best.start_objectives.push_back(obj);
        if (converged) {
            ++best.starts_converged;
        }
        const bool feasible = res <= options.tol;
        if (!feasible) {
            continue;
        }
        if (!any_feasible || obj > best.objective_value) {
            any_feasible = true;
            best_converged = converged;
            best.objective_value = obj;
            best.x = rest.x;
            best.active_sc = rest.active;
            best.residual = res;
        }
    }

    if (!any_feasible) {
        best.status = SolverStatus::Infeasible;
        return best;
    }
    best.status = best_converged ? SolverStatus::Converged : SolverStatus::MaxIter;
    best.powers = PowerAllocation(n, sc);
    best.sinrs.resize(ns);
    best.ub_rates.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < sc; ++s) {
            const std::size_t q = static_cast<std::size_t>(i) * sc + s;
            best.powers.at(i, s) = std::exp(best.x[q]);
            best.sinrs[q] = std::exp(best.x[ns + q]);
            best.ub_rates[static_cast<std::size_t>(i)] += envelope_rate_g(best.sinrs[q]);
        }
    }
    best.discrete_rates = discretize_solution(best, p, catalog);
    return best;
}

std::vector<double> discretize_solution(const BenchmarkSolution& sol, const TransformedProblem& p,
                                        const McsCatalog& catalog)
{
    if (sol.status == SolverStatus::Infeasible) {
        throw ContractViolation("cannot discretize an infeasible solution");
    }
    const std::size_t ns = static_cast<std::size_t>(p.num_devices) * p.num_sc;
    std::vector<double> out(static_cast<std::size_t>(p.num_devices), 0.0);
    for (int i = 0; i < p.num_devices; ++i) {
        const McsTable& table = catalog.at(p.tech[static_cast<std::size_t>(i)]);
        const int s = sol.active_sc[static_cast<std::size_t>(i)];
        const double gp = sol.x[ns + static_cast<std::size_t>(i) * p.num_sc + s];
        // Compare in the log domain so gamma' = log gamma_max lands on beta_max.
        int level = -1;
        for (int m = 0; m < table.levels(); ++m) {
            if (std::log(table.thresholds[static_cast<std::size_t>(m)]) <= gp + 1e-9) {
                level = m;
            }
        }
        out[static_cast<std::size_t>(i)] = table.efficiency(level);
    }
    return out;
}

nlohmann::json problem_to_json(const TransformedProblem& p)
{
    return {{"format", "iotsched.gp_problem"},
            {"version", 1},
            {"num_devices", p.num_devices},
            {"num_sc", p.num_sc},
            {"num_cells", p.num_cells},
            {"cell_of", p.cell_of},
            {"gain", p.gain},
            {"noise_w", p.noise_w},
            {"log_pmax", p.log_pmax},
            {"log_eps_p", p.log_eps_p},
            {"log_gamma_floor", p.log_gamma_floor},
            {"log_gamma_max", p.log_gamma_max}};
}

nlohmann::json solution_to_json(const BenchmarkSolution& s)
{
    return {{"format", "iotsched.gp_solution"},
            {"version", 1},
            {"status", std::string(to_string(s.status))},
            {"x", s.x},
            {"active_sc", s.active_sc},
            {"ub_rates", s.ub_rates},
            {"discrete_rates", s.discrete_rates},
            {"objective", s.objective_value},
            {"residual", s.residual},
            {"starts_converged", s.starts_converged},
            {"start_objectives", s.start_objectives}};
}

} // namespace iotsched
