// SPDX-License-Identifier: Apache-2.0
#include "iotsched/link_adaptation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace iotsched {

TechParams tech_params(Tech tech)
{
    switch (tech) {
    case Tech::NbIot:
        return {6, 1.18, -100.0, -95.0};
    case Tech::LteM:
        return {9, 2.41, -101.0, -96.0};
    case Tech::Nr5g:
        return {15, 5.55, -102.0, -97.0};
    }
    throw ConfigError("unknown technology");
}

int McsTable::level_for(double gamma) const
{
    // upper_bound: first threshold strictly greater than gamma.
    const auto it = std::upper_bound(thresholds.begin(), thresholds.end(), gamma);
    return static_cast<int>(it - thresholds.begin()) - 1;
}

double McsTable::efficiency(int level) const
{
    if (level < 0) {
        return 0.0;
    }
    return efficiencies.at(static_cast<std::size_t>(level));
}

double shannon_rate(double gamma) { return std::log2(1.0 + gamma); }

double envelope_rate_g(double gamma)
{
    if (!(gamma > 0.0)) {
        throw DomainError("envelope rate requires gamma > 0");
    }
    return std::pow(gamma, kLog10E);
}

double envelope_inverse(double beta) { return std::pow(beta, 1.0 / kLog10E); }

double discrete_rate_f(double gamma, const McsTable& table)
{
    return table.efficiency(table.level_for(gamma));
}

McsTable build_mcs_table(Tech tech, double lowest_threshold_db, double eps_gamma)
{
    const TechParams tp = tech_params(tech);
    McsTable table;
    table.tech = tech;
    table.gamma_min = eps_gamma;

    const double top_db = linear_to_db(envelope_inverse(tp.beta_max));
    if (!(lowest_threshold_db < top_db)) {
        throw ConfigError("lowest MCS threshold must lie below the top threshold (" +
                          std::to_string(top_db) + " dB)");
    }
    if (!(eps_gamma > 0.0) || !(eps_gamma < db_to_linear(lowest_threshold_db))) {
        throw ConfigError("minimum SINR must be positive and below the lowest threshold");
    }
    const int m = tp.mcs_levels;
    for (int k = 0; k < m; ++k) {
        const double db = lowest_threshold_db + (top_db - lowest_threshold_db) * k / (m - 1);
        const double gamma = db_to_linear(db);
        table.thresholds.push_back(gamma);
        table.efficiencies.push_back(envelope_rate_g(gamma));
    }
    // Pin the top level so beta_max is exact rather than a round trip through pow.
    table.thresholds.back() = envelope_inverse(tp.beta_max);
    table.efficiencies.back() = tp.beta_max;
    table.gamma_max = table.thresholds.back();
    return table;
}

McsCatalog default_mcs_catalog()
{
    McsCatalog catalog;
    for (Tech t : {Tech::NbIot, Tech::LteM, Tech::Nr5g}) {
        catalog.emplace(t, build_mcs_table(t));
    }
    return catalog;
}

nlohmann::json mcs_table_to_json(const McsTable& table)
{
    return {{"format", "iotsched.mcs"},
            {"version", 1},
            {"tech", std::string(to_string(table.tech))},
            {"thresholds", table.thresholds},
            {"efficiencies", table.efficiencies},
            {"gamma_min", table.gamma_min}};
}

McsTable mcs_table_from_json(const nlohmann::json& doc)
{
    if (doc.value("format", std::string{}) != "iotsched.mcs") {
        throw ConfigError("not an MCS table document");
    }
    McsTable table;
    table.tech = tech_from_string(doc.at("tech").get<std::string>());
    table.thresholds = doc.at("thresholds").get<std::vector<double>>();
    table.efficiencies = doc.at("efficiencies").get<std::vector<double>>();
    table.gamma_min = doc.value("gamma_min", 0.1);
    if (table.thresholds.empty() || table.thresholds.size() != table.efficiencies.size()) {
        throw ConfigError("MCS table needs matching, nonempty threshold and efficiency lists");
    }
    for (std::size_t k = 1; k < table.thresholds.size(); ++k) {
        if (!(table.thresholds[k] > table.thresholds[k - 1]) ||
            !(table.efficiencies[k] > table.efficiencies[k - 1])) {
            throw ConfigError("MCS table entries must be strictly increasing");
        }
    }
    if (!(table.gamma_min > 0.0 && table.gamma_min < table.thresholds.front())) {
        throw ConfigError("MCS table gamma_min must be positive and below the lowest threshold");
    }
    table.gamma_max = table.thresholds.back();
    return table;
}

SinrGrid compute_sinr(const Realization& r, const PowerAllocation& power, int t,
                      const PhyParams& phy)
{
    const int n = r.num_devices();
    if (power.num_devices != n || power.watts.size() != static_cast<std::size_t>(n) * power.num_sc) {
        throw ContractViolation("power allocation does not match the realization");
    }
    if (t < 0 || t >= r.timeslots) {
        throw ContractViolation("timeslot out of range");
    }
    const double pmax = phy.pmax_w() * (1.0 + 1e-12);
    SinrGrid grid;
    grid.timeslot = t;
    grid.sc.assign(n, -1);
    grid.values.assign(n, 0.0);
    std::vector<double> p(n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < power.num_sc; ++s) {
            const double w = power.at(i, s);
            if (!(w >= 0.0) || w > pmax) {
                throw ContractViolation("transmit power outside [0, P_max]");
            }
            if (w > 0.0) {
                if (grid.sc[i] >= 0) {
                    throw ContractViolation("device " + std::to_string(i) +
                                            " transmits on more than one SC");
                }
                grid.sc[i] = s;
                p[i] = w;
            }
        }
    }
    sinr_on_assignment(r, grid.sc, p, t, phy.noise_w(), grid.values);
    return grid;
}

void sinr_on_assignment(const Realization& r, std::span<const int> sc_of_device,
                        std::span<const double> power_w, int t, double noise_w,
                        std::span<double> out)
{
    const int n = r.num_devices();
    for (int i = 0; i < n; ++i) {
        const int s = sc_of_device[i];
        if (s < 0 || power_w[i] <= 0.0) {
            out[i] = 0.0;
            continue;
        }
        const int site = r.devices[i].cell_id;
        double interference = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j != i && sc_of_device[j] == s && power_w[j] > 0.0) {
                interference += power_w[j] * r.gain(t, j, site);
            }
        }
        out[i] = power_w[i] * r.gain(t, i, site) / (noise_w + interference);
    }
}

} // namespace iotsched
