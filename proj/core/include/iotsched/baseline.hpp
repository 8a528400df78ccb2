// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "iotsched/channel.hpp"
#include "iotsched/link_adaptation.hpp"

#include <optional>
#include <ostream>
#include <vector>

namespace iotsched {

/// Static SC allocation of a realization: SC id for every device.
struct ScAssignment {
    int num_sc = 0;
    std::vector<int> sc;

    /// Devices per SC across all cells, in device-id order.
    std::vector<std::vector<int>> cochannel_sets() const;
};

/// Device k (id order) of each cell takes SC k mod num_sc.
/// Throws ConfigError when a cell has more devices than SCs.
ScAssignment round_robin_assign(const Realization& realization, int num_sc);

enum class BaselineVariant { NoIci, Ici, ReTx };

std::string_view to_string(BaselineVariant v);

/// P_max G / (N0 + Phi_comp); no compensation when `ici_compensation_dbm` is empty.
std::vector<double> estimate_sinr(const Realization& realization, const ScAssignment& assignment,
                                  std::optional<double> ici_compensation_dbm, int t,
                                  const PhyParams& phy = {});

struct BaselineDecision {
    int timeslot = 0;
    std::vector<int> sc;
    std::vector<double> power_w;
    std::vector<int> estimated_mcs;   // -1 = outage estimate
    std::vector<double> estimated_rate;
    std::vector<double> effective_rate;
    std::vector<bool> retransmit;
};

struct BaselineRun {
    std::vector<BaselineDecision> frames;
    /// Wasted frames per device (retransmissions triggered).
    std::vector<int> delay_frames;

    /// Rates laid out [t * devices + device].
    std::vector<double> rate_grid() const;
};

/// Frame-by-frame round-robin schedule at P_max.
///
/// ReTx: after a failed new transmission the next frame resends using the MCS of
/// the failed frame's effective SINR. If that SINR was in outage there is
/// nothing to adjust and the device starts a new transmission instead.
BaselineRun run_baseline(const Realization& realization, const ScAssignment& assignment,
                         BaselineVariant variant, std::optional<double> ici_compensation_dbm,
                         const McsCatalog& catalog, const PhyParams& phy = {});

/// {-110, -105, -100, -95, -90} dBm.
std::vector<double> default_compensation_grid();

/// CSV: t,device,sc,mcs,est_rate,eff_rate,retx
void write_baseline_trace(std::ostream& out, const BaselineRun& run);

} // namespace iotsched
