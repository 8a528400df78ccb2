// SPDX-License-Identifier: Apache-2.0
#include "iotsched/metrics.hpp"

#include "iotsched/common.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace iotsched {

MetricsRecord compute_metrics(const RateGrid& grid, int symbols_per_slot, double slot_duration_s)
{
    if (grid.timeslots < 1 || grid.devices < 1 ||
        grid.rates.size() != static_cast<std::size_t>(grid.timeslots) * grid.devices) {
        throw ContractViolation("rate grid is incomplete");
    }
    const double scale = symbols_per_slot / slot_duration_s;
    MetricsRecord rec;
    double am = 0.0;
    double gm = 0.0;
    double hm = 0.0;
    for (int t = 0; t < grid.timeslots; ++t) {
        double sum = 0.0;
        double log_sum = 0.0;
        double inv_sum = 0.0;
        bool zero = false;
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        for (int i = 0; i < grid.devices; ++i) {
            const double r = grid.at(t, i);
            if (!(r >= 0.0) || !std::isfinite(r)) {
                throw ContractViolation("rates must be finite and nonnegative");
            }
            const double x = r * scale;
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            sum += x;
            if (r == 0.0) {
                zero = true;
                ++rec.zero_rate_count;
                continue;
            }
            log_sum += std::log(x);
            inv_sum += 1.0 / x;
        }
        const double n = grid.devices;
        const double a = sum / n;
        if (zero) {
            am += a;
            continue;
        }
        if (lo == hi) {
            // All equal: report the common value for every mean.
            am += lo;
            gm += lo;
            hm += lo;
            continue;
        }
        // Rounding can push the means a few ulps out of order; the true values are not.
        const double g = std::min(std::exp(log_sum / n), a);
        const double h = std::min(n / inv_sum, g);
        am += a;
        gm += g;
        hm += h;
    }
    rec.am = am / grid.timeslots;
    rec.gm = gm / grid.timeslots;
    rec.hm = hm / grid.timeslots;
    return rec;
}

double measure_latency(const std::function<void()>& run_fn, int repetitions)
{
    if (repetitions < 10) {
        throw ConfigError("latency measurement needs at least 10 repetitions");
    }
    std::vector<double> ms;
    ms.reserve(static_cast<std::size_t>(repetitions));
    for (int k = 0; k < repetitions; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        run_fn();
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return quartiles(std::move(ms)).median;
}

namespace {

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

void write_metrics_header(std::ostream& out)
{
    out << "realization_id,scheduler,tech,am,gm,hm,zero_count,avg_delay_frames,latency_train_ms,"
           "latency_test_ms\n";
}

void write_metrics_row(std::ostream& out, const MetricsRecord& r)
{
    out << r.realization_id << ',' << r.scheduler << ',' << r.tech << ',' << fmt(r.am) << ','
        << fmt(r.gm) << ',' << fmt(r.hm) << ',' << r.zero_rate_count << ',' << fmt(r.avg_delay_frames)
        << ',' << (r.latency_train_ms ? fmt(*r.latency_train_ms) : "") << ','
        << (r.latency_test_ms ? fmt(*r.latency_test_ms) : "") << '\n';
}

Quartiles quartiles(std::vector<double> v)
{
    if (v.empty()) {
        throw ContractViolation("quartiles of an empty sample");
    }
    std::sort(v.begin(), v.end());
    auto at = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {at(0.25), at(0.5), at(0.75)};
}

} // namespace iotsched
