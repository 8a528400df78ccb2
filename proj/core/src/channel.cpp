// SPDX-License-Identifier: Apache-2.0
#include "iotsched/channel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace iotsched {

namespace {

constexpr double kSqrt3 = 1.73205080756887729353;

Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
double norm2(Point p) { return p.x * p.x + p.y * p.y; }

Point rotate(Point p, double deg)
{
    const double c = std::cos(deg * kPi / 180.0);
    const double s = std::sin(deg * kPi / 180.0);
    return {c * p.x - s * p.y, s * p.x + c * p.y};
}

double wrap_degrees(double deg)
{
    double w = std::fmod(deg + 180.0, 360.0);
    if (w < 0.0) {
        w += 360.0;
    }
    return w - 180.0;
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

} // namespace

std::string_view to_string(Tech tech)
{
    switch (tech) {
    case Tech::NbIot:
        return "nb-iot";
    case Tech::LteM:
        return "lte-m";
    case Tech::Nr5g:
        return "5g-nr";
    }
    return "unknown";
}

Tech tech_from_string(std::string_view name)
{
    if (name == "nb-iot" || name == "nbiot" || name == "NB-IoT") {
        return Tech::NbIot;
    }
    if (name == "lte-m" || name == "ltem" || name == "LTE-M") {
        return Tech::LteM;
    }
    if (name == "5g-nr" || name == "nr" || name == "5G-NR") {
        return Tech::Nr5g;
    }
    throw ConfigError("unknown technology '" + std::string(name) + "'");
}

// ---- layout -------------------------------------------------------------

double CellLayout::cell_radius() const { return isd / kSqrt3; }

Point CellLayout::displacement(Point p, int site) const
{
    Point d = p - sites.at(site);
    if (!wraparound || translations.empty()) {
        return d;
    }
    // Reduce into the fundamental domain of the period lattice, then pick the
    // nearest of the surrounding images.
    const Point a = translations[0];
    const Point b = translations[1];
    const double det = a.x * b.y - a.y * b.x;
    const double alpha = (d.x * b.y - d.y * b.x) / det;
    const double beta = (a.x * d.y - a.y * d.x) / det;
    const double ra = std::round(alpha);
    const double rb = std::round(beta);
    d = {d.x - ra * a.x - rb * b.x, d.y - ra * a.y - rb * b.y};

    Point best = d;
    double best_n2 = norm2(d);
    for (const Point& t : translations) {
        const Point cand = d - t;
        const double n2 = norm2(cand);
        if (n2 < best_n2) {
            best_n2 = n2;
            best = cand;
        }
    }
    return best;
}

double CellLayout::distance(Point p, int site) const { return std::sqrt(norm2(displacement(p, site))); }

bool CellLayout::inside_cell(Point p, int site) const
{
    const Point d = p - sites.at(site);
    const double inradius = isd / 2.0;
    for (double deg : {0.0, 60.0, 120.0}) {
        const double ux = std::cos(deg * kPi / 180.0);
        const double uy = std::sin(deg * kPi / 180.0);
        if (std::abs(d.x * ux + d.y * uy) > inradius) {
            return false;
        }
    }
    return true;
}

CellLayout build_layout(int num_sites, double isd, bool wraparound)
{
    if (num_sites < 1 || num_sites > 7) {
        throw ConfigError("layout supports 1 to 7 sites (center plus one ring), got " +
                          std::to_string(num_sites));
    }
    if (!(isd > 0.0)) {
        throw ConfigError("inter-site distance must be positive");
    }
    CellLayout layout;
    layout.num_sites = num_sites;
    layout.isd = isd;
    layout.wraparound = wraparound;
    layout.sites.push_back({0.0, 0.0});
    for (int k = 1; k < num_sites; ++k) {
        layout.sites.push_back(rotate({isd, 0.0}, 60.0 * (k - 1)));
    }
    if (wraparound) {
        // 7-cell cluster period: 2 a1 + a2 on the hexagonal site lattice.
        const Point base{2.5 * isd, kSqrt3 / 2.0 * isd};
        for (int k = 0; k < 6; ++k) {
            layout.translations.push_back(rotate(base, 60.0 * k));
        }
    }
    return layout;
}

std::vector<NodePlacement> place_devices(const CellLayout& layout, int per_cell,
                                         std::span<const Tech> techs, std::uint64_t seed,
                                         double min_distance)
{
    if (per_cell < 1) {
        throw ConfigError("devices per cell must be at least 1");
    }
    if (techs.empty()) {
        throw ConfigError("at least one technology is required");
    }
    Rng rng(seed);
    const double radius = layout.cell_radius();
    std::uniform_real_distribution<double> box(-radius, radius);

    std::vector<NodePlacement> out;
    out.reserve(static_cast<std::size_t>(layout.num_sites) * per_cell);
    for (int cell = 0; cell < layout.num_sites; ++cell) {
        const Point center = layout.sites[cell];
        for (int k = 0; k < per_cell; ++k) {
            Point p;
            for (;;) {
                p = {center.x + box(rng), center.y + box(rng)};
                const Point d = p - center;
                if (layout.inside_cell(p, cell) && norm2(d) >= min_distance * min_distance) {
                    break;
                }
            }
            out.push_back({static_cast<int>(out.size()), cell, p,
                           techs[static_cast<std::size_t>(k) % techs.size()]});
        }
    }
    return out;
}

std::vector<NodePlacement> place_devices(const CellLayout& layout, int per_cell, Tech tech,
                                         std::uint64_t seed, double min_distance)
{
    const std::array<Tech, 1> one{tech};
    return place_devices(layout, per_cell, std::span<const Tech>(one), seed, min_distance);
}

// ---- propagation --------------------------------------------------------

double path_loss_db(double distance_m)
{
    if (!(distance_m >= 35.0)) {
        throw DomainError("path loss model requires d >= 35 m, got " + std::to_string(distance_m));
    }
    return 128.1 + 37.6 * std::log10(distance_m / 1000.0);
}

double directivity_attenuation_db(double angle_off_boresight_deg)
{
    const double ratio = angle_off_boresight_deg / 65.0;
    return std::min(12.0 * ratio * ratio, 20.0);
}

double sector_attenuation_db(double bearing_deg)
{
    double best = 20.0;
    for (double boresight : {0.0, 120.0, 240.0}) {
        best = std::min(best, directivity_attenuation_db(wrap_degrees(bearing_deg - boresight)));
    }
    return best;
}

double bessel_j0(double x) { return std::cyl_bessel_j(0.0, std::abs(x)); }

double fading_correlation(double doppler_hz, double interval_s)
{
    return bessel_j0(2.0 * kPi * doppler_hz * interval_s);
}

FadingProcess FadingProcess::make(std::size_t links, double doppler_hz, double frame_interval_s,
                                  Rng& rng)
{
    FadingProcess proc;
    proc.doppler_hz = doppler_hz;
    proc.frame_interval_s = frame_interval_s;
    proc.rho = fading_correlation(doppler_hz, frame_interval_s);
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    proc.state.resize(links);
    for (auto& h : proc.state) {
        const double re = normal(rng);
        const double im = normal(rng);
        h = {re, im};
    }
    return proc;
}

FadingProcess jakes_step(FadingProcess process, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    const double innovation = std::sqrt(std::max(0.0, 1.0 - process.rho * process.rho));
    for (auto& h : process.state) {
        const double re = normal(rng);
        const double im = normal(rng);
        h = process.rho * h + innovation * std::complex<double>(re, im);
    }
    return process;
}

double link_gain_db(double distance_m, double bearing_deg, double shadow_db, const PhyParams& phy)
{
    return -path_loss_db(distance_m) - phy.penetration_loss_db + phy.bs_antenna_gain_dbi +
           phy.ue_antenna_gain_dbi - sector_attenuation_db(bearing_deg) - shadow_db;
}

Realization realize(const CellLayout& layout, std::vector<NodePlacement> placements,
                    const RealizationOptions& options, std::uint64_t large_scale_seed,
                    std::uint64_t fading_seed, std::uint64_t id)
{
    if (options.timeslots < 1) {
        throw ConfigError("a realization needs at least one timeslot");
    }
    Realization r;
    r.id = id;
    r.layout = layout;
    r.devices = std::move(placements);
    r.timeslots = options.timeslots;
    r.fading = options.fading;

    const std::size_t n = r.devices.size();
    const std::size_t sites = static_cast<std::size_t>(layout.num_sites);

    Rng shadow_rng(large_scale_seed);
    std::normal_distribution<double> shadow(0.0, options.phy.shadowing_std_db);
    r.large_scale_db.resize(n * sites);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t b = 0; b < sites; ++b) {
            const Point d = layout.displacement(r.devices[i].position, static_cast<int>(b));
            const double dist = std::max(std::sqrt(norm2(d)), options.phy.min_distance_m);
            const double bearing = std::atan2(d.y, d.x) * 180.0 / kPi;
            const double sh = options.shadowing ? shadow(shadow_rng) : 0.0;
            r.large_scale_db[i * sites + b] = link_gain_db(dist, bearing, sh, options.phy);
        }
    }

    r.gains.resize(static_cast<std::size_t>(r.timeslots) * n * sites);
    std::vector<double> large_lin(n * sites);
    for (std::size_t k = 0; k < large_lin.size(); ++k) {
        large_lin[k] = db_to_linear(r.large_scale_db[k]);
    }
    if (!options.fading) {
        for (int t = 0; t < r.timeslots; ++t) {
            std::copy(large_lin.begin(), large_lin.end(),
                      r.gains.begin() + static_cast<std::ptrdiff_t>(t * n * sites));
        }
        return r;
    }
    Rng fading_rng(fading_seed);
    FadingProcess proc =
        FadingProcess::make(n * sites, options.phy.doppler_hz, options.phy.frame_interval_s, fading_rng);
    for (int t = 0; t < r.timeslots; ++t) {
        if (t > 0) {
            proc = jakes_step(std::move(proc), fading_rng);
        }
        for (std::size_t k = 0; k < n * sites; ++k) {
            // Floor keeps the gain strictly positive under a deep fade.
            const double power = std::max(std::norm(proc.state[k]), 1e-12);
            r.gains[t * n * sites + k] = large_lin[k] * power;
        }
    }
    return r;
}

// ---- serialization ------------------------------------------------------

nlohmann::json realization_to_json(const Realization& r)
{
    using nlohmann::json;
    json doc;
    doc["format"] = "iotsched.realization";
    doc["version"] = 1;
    doc["id"] = r.id;
    doc["timeslots"] = r.timeslots;
    doc["fading"] = r.fading;
    doc["layout"] = {{"num_sites", r.layout.num_sites},
                     {"isd", r.layout.isd},
                     {"sectors_per_site", r.layout.sectors_per_site},
                     {"wraparound", r.layout.wraparound}};
    json devices = json::array();
    for (const auto& d : r.devices) {
        devices.push_back({{"id", d.device_id},
                           {"cell", d.cell_id},
                           {"x", round6(d.position.x)},
                           {"y", round6(d.position.y)},
                           {"tech", std::string(to_string(d.tech))}});
    }
    doc["devices"] = std::move(devices);

    const int n = r.num_devices();
    const int sites = r.num_sites();
    json large = json::array();
    for (int i = 0; i < n; ++i) {
        json row = json::array();
        for (int b = 0; b < sites; ++b) {
            row.push_back(round6(r.large_scale(i, b)));
        }
        large.push_back(std::move(row));
    }
    doc["large_scale_db"] = std::move(large);

    json gains = json::array();
    for (int t = 0; t < r.timeslots; ++t) {
        json slot = json::array();
        for (int i = 0; i < n; ++i) {
            json row = json::array();
            for (int b = 0; b < sites; ++b) {
                row.push_back(round6(linear_to_db(r.gain(t, i, b))));
            }
            slot.push_back(std::move(row));
        }
        gains.push_back(std::move(slot));
    }
    doc["gains_db"] = std::move(gains);
    return doc;
}

Realization realization_from_json(const nlohmann::json& doc)
{
    if (doc.value("format", std::string{}) != "iotsched.realization") {
        throw ConfigError("not a realization document");
    }
    if (doc.at("version").get<int>() != 1) {
        throw ConfigError("unsupported realization document version");
    }
    const auto& lay = doc.at("layout");
    Realization r;
    r.layout = build_layout(lay.at("num_sites").get<int>(), lay.at("isd").get<double>(),
                            lay.at("wraparound").get<bool>());
    r.layout.sectors_per_site = lay.value("sectors_per_site", 3);
    r.id = doc.at("id").get<std::uint64_t>();
    r.timeslots = doc.at("timeslots").get<int>();
    r.fading = doc.at("fading").get<bool>();
    for (const auto& d : doc.at("devices")) {
        r.devices.push_back({d.at("id").get<int>(), d.at("cell").get<int>(),
                             {d.at("x").get<double>(), d.at("y").get<double>()},
                             tech_from_string(d.at("tech").get<std::string>())});
    }
    const std::size_t n = r.devices.size();
    const std::size_t sites = static_cast<std::size_t>(r.layout.num_sites);
    for (const auto& row : doc.at("large_scale_db")) {
        for (const auto& v : row) {
            r.large_scale_db.push_back(v.get<double>());
        }
    }
    for (const auto& slot : doc.at("gains_db")) {
        for (const auto& row : slot) {
            for (const auto& v : row) {
                r.gains.push_back(db_to_linear(v.get<double>()));
            }
        }
    }
    if (r.large_scale_db.size() != n * sites ||
        r.gains.size() != static_cast<std::size_t>(r.timeslots) * n * sites) {
        throw ConfigError("realization document has inconsistent dimensions");
    }
    return r;
}

} // namespace iotsched
