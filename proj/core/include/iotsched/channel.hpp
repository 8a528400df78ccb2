// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "iotsched/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace iotsched {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Hexagonal site grid: the center site plus up to one ring of six neighbours.
///
/// With wraparound the cluster is treated as a torus whose period lattice is
/// spanned by the `translations` (length isd * sqrt(7)); link geometry then uses
/// the nearest image of the site.
struct CellLayout {
    int num_sites = 7;
    double isd = 500.0;
    int sectors_per_site = 3;
    bool wraparound = true;
    std::vector<Point> sites;
    std::vector<Point> translations;

    /// Vector from `site` to `p` under the minimum-image convention.
    Point displacement(Point p, int site) const;
    double distance(Point p, int site) const;
    /// True when `p` lies in the hexagon of `site` (no wraparound applied).
    bool inside_cell(Point p, int site) const;
    /// Circumradius of one hexagonal cell.
    double cell_radius() const;
};

/// Supports 1..7 sites (prefix of the 7-site cluster). Throws ConfigError otherwise.
CellLayout build_layout(int num_sites, double isd, bool wraparound);

struct NodePlacement {
    int device_id = 0;
    int cell_id = 0;
    Point position;
    Tech tech = Tech::NbIot;
};

/// Uniform placement of `per_cell` devices in every cell hexagon, rejecting points
/// closer than `min_distance` to the serving site. Device ids are cell-major.
std::vector<NodePlacement> place_devices(const CellLayout& layout, int per_cell, Tech tech,
                                         std::uint64_t seed, double min_distance = 35.0);

/// Same, with device k of each cell taking `techs[k % techs.size()]`.
std::vector<NodePlacement> place_devices(const CellLayout& layout, int per_cell,
                                         std::span<const Tech> techs, std::uint64_t seed,
                                         double min_distance = 35.0);

/// Urban macro path loss 128.1 + 37.6 log10(d/1000). Throws DomainError for d < 35 m.
double path_loss_db(double distance_m);

/// Horizontal sector pattern min(12 (theta/65)^2, 20); theta in degrees off boresight.
double directivity_attenuation_db(double angle_off_boresight_deg);

/// Attenuation seen through the best of the three sectors (boresights 0/120/240 deg)
/// for a link arriving at bearing `bearing_deg`.
double sector_attenuation_db(double bearing_deg);

/// Zero-order Bessel function of the first kind.
double bessel_j0(double x);

/// rho = J0(2 pi f_d T_f).
double fading_correlation(double doppler_hz, double interval_s);

/// First-order complex Gauss-Markov (Jakes) fading for a bank of links.
struct FadingProcess {
    double rho = 1.0;
    double doppler_hz = 10.0;
    double frame_interval_s = 0.010;
    std::vector<std::complex<double>> state;

    /// Process with `links` independent CN(0,1) amplitudes (stationary start).
    static FadingProcess make(std::size_t links, double doppler_hz, double frame_interval_s,
                              Rng& rng);
};

/// h(t+1) = rho h(t) + sqrt(1 - rho^2) w, w ~ CN(0,1).
FadingProcess jakes_step(FadingProcess process, Rng& rng);

struct RealizationOptions {
    int timeslots = 20;
    bool fading = true;
    bool shadowing = true;
    PhyParams phy;
};

/// One network snapshot: placements, frozen large-scale gains and the small-scale
/// fading evolution over `timeslots` slots.
struct Realization {
    std::uint64_t id = 0;
    CellLayout layout;
    std::vector<NodePlacement> devices;
    int timeslots = 1;
    bool fading = false;
    /// [device * num_sites + site]
    std::vector<double> large_scale_db;
    /// [(t * num_devices + device) * num_sites + site], linear power gain.
    std::vector<double> gains;

    int num_devices() const { return static_cast<int>(devices.size()); }
    int num_sites() const { return layout.num_sites; }
    double gain(int t, int device, int site) const
    {
        return gains[(static_cast<std::size_t>(t) * devices.size() + device) * layout.num_sites +
                     site];
    }
    double large_scale(int device, int site) const
    {
        return large_scale_db[static_cast<std::size_t>(device) * layout.num_sites + site];
    }
    /// Gain from `device` to its own serving site.
    double serving_gain(int t, int device) const
    {
        return gain(t, device, devices[device].cell_id);
    }
};

/// Large-scale link gain in dB: -PL - penetration + antenna gains - directivity - shadow.
double link_gain_db(double distance_m, double bearing_deg, double shadow_db, const PhyParams& phy);

/// Compose path loss, shadowing, penetration, antenna/directivity gains and fading.
/// Large-scale terms depend only on `large_scale_seed`; `fading_seed` drives |h|^2.
Realization realize(const CellLayout& layout, std::vector<NodePlacement> placements,
                    const RealizationOptions& options, std::uint64_t large_scale_seed,
                    std::uint64_t fading_seed, std::uint64_t id = 0);

/// Versioned JSON document (gains stored in dB, 6 decimals).
nlohmann::json realization_to_json(const Realization& realization);
Realization realization_from_json(const nlohmann::json& doc);

} // namespace iotsched
