// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "iotsched/channel.hpp"
#include "iotsched/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <span>
#include <vector>

namespace iotsched {

/// Per-technology constants: MCS size, top efficiency and the interference
/// allocation range used by the learning schedulers.
struct TechParams {
    int mcs_levels = 0;
    double beta_max = 0.0;
    double phi_min_dbm = 0.0;
    double phi_max_dbm = 0.0;
};

TechParams tech_params(Tech tech);

/// Discrete link adaptation table. Level indices run 0..levels()-1; -1 means outage.
struct McsTable {
    Tech tech = Tech::NbIot;
    std::vector<double> thresholds;   // linear SINR, strictly increasing
    std::vector<double> efficiencies; // bits/symbol, strictly increasing
    double gamma_max = 0.0;
    double gamma_min = 0.1;

    int levels() const { return static_cast<int>(thresholds.size()); }
    double beta_max() const { return efficiencies.back(); }
    /// Highest level whose threshold does not exceed `gamma`, or -1.
    int level_for(double gamma) const;
    /// beta of `level`; 0 for outage.
    double efficiency(int level) const;
};

/// Thresholds uniformly spaced in dB from `lowest_threshold_db` up to g^-1(beta_max),
/// efficiencies inscribed under the envelope (beta_m = g(gamma_m)).
McsTable build_mcs_table(Tech tech, double lowest_threshold_db = -6.0, double eps_gamma = 0.1);

nlohmann::json mcs_table_to_json(const McsTable& table);
McsTable mcs_table_from_json(const nlohmann::json& doc);

using McsCatalog = std::map<Tech, McsTable>;
McsCatalog default_mcs_catalog();

/// log2(1 + gamma).
double shannon_rate(double gamma);
/// gamma^log10(e). Throws DomainError for gamma <= 0.
double envelope_rate_g(double gamma);
/// Inverse of the envelope: beta^(1/log10(e)).
double envelope_inverse(double beta);
/// Step function of the table.
double discrete_rate_f(double gamma, const McsTable& table);

/// Transmit power in watts per (device, SC), row-major [device * num_sc + sc].
struct PowerAllocation {
    int num_devices = 0;
    int num_sc = 0;
    std::vector<double> watts;

    PowerAllocation() = default;
    PowerAllocation(int devices, int scs)
        : num_devices(devices), num_sc(scs), watts(static_cast<std::size_t>(devices) * scs, 0.0)
    {
    }
    double& at(int device, int sc) { return watts[static_cast<std::size_t>(device) * num_sc + sc]; }
    double at(int device, int sc) const
    {
        return watts[static_cast<std::size_t>(device) * num_sc + sc];
    }
};

/// SINR per device at one timeslot. `sc[i]` is -1 for a silent device (SINR 0).
struct SinrGrid {
    int timeslot = 0;
    std::vector<int> sc;
    std::vector<double> values;
};

/// Uplink SINR of every device on its SC. Interference sums over every other
/// transmitter on the same SC, received at the victim's serving site.
/// Throws ContractViolation when a device uses more than one SC or a power lies
/// outside [0, P_max].
SinrGrid compute_sinr(const Realization& realization, const PowerAllocation& power, int t,
                      const PhyParams& phy = {});

/// Unchecked variant for inner loops: one SC and one power per device.
void sinr_on_assignment(const Realization& realization, std::span<const int> sc_of_device,
                        std::span<const double> power_w, int t, double noise_w,
                        std::span<double> out);

} // namespace iotsched
