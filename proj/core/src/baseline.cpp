// SPDX-License-Identifier: Apache-2.0
#include "iotsched/baseline.hpp"

#include <string>

namespace iotsched {

std::vector<std::vector<int>> ScAssignment::cochannel_sets() const
{
    std::vector<std::vector<int>> sets(static_cast<std::size_t>(num_sc));
    for (std::size_t i = 0; i < sc.size(); ++i) {
        if (sc[i] >= 0) {
            sets[static_cast<std::size_t>(sc[i])].push_back(static_cast<int>(i));
        }
    }
    return sets;
}

ScAssignment round_robin_assign(const Realization& r, int num_sc)
{
    if (num_sc < 1) {
        throw ConfigError("at least one SC per RB is required");
    }
    ScAssignment a;
    a.num_sc = num_sc;
    a.sc.assign(r.devices.size(), -1);
    std::vector<int> next(static_cast<std::size_t>(r.num_sites()), 0);
    for (const auto& d : r.devices) {
        int& k = next.at(static_cast<std::size_t>(d.cell_id));
        if (k >= num_sc) {
            throw ConfigError("cell " + std::to_string(d.cell_id) + " has more devices than SCs (" +
                              std::to_string(num_sc) + ")");
        }
        a.sc[static_cast<std::size_t>(d.device_id)] = k % num_sc;
        ++k;
    }
    return a;
}

std::string_view to_string(BaselineVariant v)
{
    switch (v) {
    case BaselineVariant::NoIci:
        return "baseline_noici";
    case BaselineVariant::Ici:
        return "baseline_ici";
    case BaselineVariant::ReTx:
        return "baseline_retx";
    }
    return "unknown";
}

std::vector<double> estimate_sinr(const Realization& r, const ScAssignment& a,
                                  std::optional<double> ici_compensation_dbm, int t,
                                  const PhyParams& phy)
{
    const double denom =
        phy.noise_w() + (ici_compensation_dbm ? dbm_to_watts(*ici_compensation_dbm) : 0.0);
    std::vector<double> out(r.devices.size(), 0.0);
    for (int i = 0; i < r.num_devices(); ++i) {
        if (a.sc[static_cast<std::size_t>(i)] >= 0) {
            out[static_cast<std::size_t>(i)] = phy.pmax_w() * r.serving_gain(t, i) / denom;
        }
    }
    return out;
}

std::vector<double> BaselineRun::rate_grid() const
{
    std::vector<double> grid;
    for (const auto& f : frames) {
        grid.insert(grid.end(), f.effective_rate.begin(), f.effective_rate.end());
    }
    return grid;
}

BaselineRun run_baseline(const Realization& r, const ScAssignment& a, BaselineVariant variant,
                         std::optional<double> ici_compensation_dbm, const McsCatalog& catalog,
                         const PhyParams& phy)
{
    const int n = r.num_devices();
    const std::optional<double> comp =
        variant == BaselineVariant::NoIci ? std::nullopt : ici_compensation_dbm;
    if (variant != BaselineVariant::NoIci && !comp) {
        throw ConfigError("ICI baselines need a compensation value");
    }

    std::vector<double> power(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        if (a.sc[static_cast<std::size_t>(i)] >= 0) {
            power[static_cast<std::size_t>(i)] = phy.pmax_w();
        }
    }

    BaselineRun run;
    run.delay_frames.assign(static_cast<std::size_t>(n), 0);
    // Level to resend with, or -2 when the next frame is a new transmission.
    std::vector<int> pending(static_cast<std::size_t>(n), -2);
    std::vector<double> effective(static_cast<std::size_t>(n));

    for (int t = 0; t < r.timeslots; ++t) {
        const auto est = estimate_sinr(r, a, comp, t, phy);
        sinr_on_assignment(r, a.sc, power, t, phy.noise_w(), effective);

        BaselineDecision d;
        d.timeslot = t;
        d.sc = a.sc;
        d.power_w = power;
        d.estimated_mcs.resize(static_cast<std::size_t>(n));
        d.estimated_rate.resize(static_cast<std::size_t>(n));
        d.effective_rate.resize(static_cast<std::size_t>(n));
        d.retransmit.assign(static_cast<std::size_t>(n), false);

        for (int i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const McsTable& table = catalog.at(r.devices[k].tech);
            const bool resend = variant == BaselineVariant::ReTx && pending[k] >= -1;
            const int level = resend ? pending[k] : table.level_for(est[k]);
            const int eff_level = table.level_for(effective[k]);
            const double beta = table.efficiency(level);
            d.estimated_mcs[k] = level;
            d.estimated_rate[k] = beta;
            d.effective_rate[k] = (level >= 0 && eff_level >= level) ? beta : 0.0;
            d.retransmit[k] = resend;

            pending[k] = -2;
            if (variant == BaselineVariant::ReTx && !resend && level >= 0 &&
                d.effective_rate[k] == 0.0 && eff_level >= 0) {
                pending[k] = eff_level;
                ++run.delay_frames[k];
            }
        }
        run.frames.push_back(std::move(d));
    }
    return run;
}

std::vector<double> default_compensation_grid() { return {-110.0, -105.0, -100.0, -95.0, -90.0}; }

void write_baseline_trace(std::ostream& out, const BaselineRun& run)
{
    out << "t,device,sc,mcs,est_rate,eff_rate,retx\n";
    for (const auto& f : run.frames) {
        for (std::size_t i = 0; i < f.sc.size(); ++i) {
            out << f.timeslot << ',' << i << ',' << f.sc[i] << ',' << f.estimated_mcs[i] << ','
                << f.estimated_rate[i] << ',' << f.effective_rate[i] << ','
                << (f.retransmit[i] ? 1 : 0) << '\n';
        }
    }
}

} // namespace iotsched
