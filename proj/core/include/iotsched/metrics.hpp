// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace iotsched {

/// Link rates in bits/symbol, [t * devices + device].
struct RateGrid {
    int timeslots = 0;
    int devices = 0;
    std::vector<double> rates;

    double at(int t, int device) const
    {
        return rates[static_cast<std::size_t>(t) * devices + device];
    }
};

struct MetricsRecord {
    std::uint64_t realization_id = 0;
    std::string scheduler;
    std::string tech;
    double am = 0.0; // bits/s
    double gm = 0.0;
    double hm = 0.0;
    int zero_rate_count = 0;
    double avg_delay_frames = 0.0;
    std::optional<double> latency_train_ms;
    std::optional<double> latency_test_ms;
};

/// Per-timeslot arithmetic, geometric and harmonic means of rate * N_S / T_S,
/// averaged over timeslots. A zero rate makes that timeslot's GM and HM zero.
/// Throws ContractViolation for an incomplete grid or a negative rate.
MetricsRecord compute_metrics(const RateGrid& grid, int symbols_per_slot = 14,
                              double slot_duration_s = 0.5e-3);

/// Median wall-clock milliseconds per call over `repetitions` (at least 10).
double measure_latency(const std::function<void()>& run_fn, int repetitions);

/// realization_id,scheduler,tech,am,gm,hm,zero_count,avg_delay_frames,latency_train_ms,latency_test_ms
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRecord& record);

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};

/// Linear-interpolation quartiles (type 7). Throws ContractViolation on empty input.
Quartiles quartiles(std::vector<double> values);

} // namespace iotsched
