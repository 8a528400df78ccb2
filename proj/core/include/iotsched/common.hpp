// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace iotsched {

/// Radio access technology of a device. Determines its MCS table and
/// interference-allocation bounds.
enum class Tech { NbIot, LteM, Nr5g };

std::string_view to_string(Tech tech);
Tech tech_from_string(std::string_view name);

/// Invalid or inconsistent configuration; reported before any compute.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the validity domain of a model (e.g. path loss below 35 m).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Caller broke an operation's precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline constexpr double kPi = 3.14159265358979323846;
/// log10(e), the exponent of the rate envelope g(gamma) = gamma^kappa.
inline constexpr double kLog10E = 0.43429448190325182765;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

/// Physical-layer constants of the uplink RB model.
struct PhyParams {
    double noise_density_dbm_hz = -174.0;
    double sc_spacing_hz = 15e3;
    double noise_figure_db = 5.0;
    double penetration_loss_db = 20.0;
    double bs_antenna_gain_dbi = 15.0;
    double ue_antenna_gain_dbi = 0.0;
    double shadowing_std_db = 10.0;
    double pmax_dbm = 23.0;
    double pmin_dbm = -40.0;
    double eps_power_w = 1e-12;
    double doppler_hz = 10.0;
    double frame_interval_s = 0.010;
    int symbols_per_slot = 14;
    double slot_duration_s = 0.5e-3;
    double min_distance_m = 35.0;

    /// Noise power per SC: density + bandwidth + receiver noise figure.
    double noise_dbm() const
    {
        return noise_density_dbm_hz + 10.0 * std::log10(sc_spacing_hz) + noise_figure_db;
    }
    double noise_w() const { return dbm_to_watts(noise_dbm()); }
    double pmax_w() const { return dbm_to_watts(pmax_dbm); }
};

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent seed streams.
constexpr std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for sub-stream `stream` of `seed`. Distinct streams never share a value
/// for practical purposes, which keeps e.g. fading and shadowing draws separable.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

} // namespace iotsched
