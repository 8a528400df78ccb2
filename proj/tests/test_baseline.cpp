// SPDX-License-Identifier: Apache-2.0
#include "iotsched/baseline.hpp"
#include "iotsched/metrics.hpp"
#include "support/oracles.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace iotsched;
using Catch::Matchers::WithinRel;

namespace {

Realization make(int cells, int per_cell, bool fading, std::uint64_t seed, int timeslots = 20)
{
    const CellLayout layout = build_layout(cells, 500.0, true);
    RealizationOptions opt;
    opt.timeslots = timeslots;
    opt.fading = fading;
    return realize(layout, place_devices(layout, per_cell, Tech::NbIot, derive_seed(seed, 1)), opt,
                   derive_seed(seed, 2), derive_seed(seed, 3), seed);
}

MetricsRecord metrics_of(const Realization& r, const BaselineRun& run)
{
    return compute_metrics({r.timeslots, r.num_devices(), run.rate_grid()});
}

} // namespace

TEST_CASE("round-robin SC assignment", "[baseline]")
{
    const Realization r = make(3, 3, false, 4, 1);
    const ScAssignment a = round_robin_assign(r, 3);
    CHECK(a.sc == std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1, 2});
    const auto sets = a.cochannel_sets();
    REQUIRE(sets.size() == 3);
    CHECK(sets[1] == std::vector<int>{1, 4, 7});

    const ScAssignment wide = round_robin_assign(r, 5);
    CHECK(wide.sc == std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1, 2});

    CHECK_THROWS_AS(round_robin_assign(r, 2), ConfigError);
    CHECK_THROWS_AS(round_robin_assign(r, 0), ConfigError);

    const Realization big = make(7, 12, false, 5, 1);
    const ScAssignment full = round_robin_assign(big, 12);
    for (const auto& set : full.cochannel_sets()) {
        CHECK(set.size() == 7);
    }
}

TEST_CASE("SINR estimate", "[baseline]")
{
    const PhyParams phy;
    const Realization r = make(3, 3, false, 6, 1);
    const ScAssignment a = round_robin_assign(r, 3);
    const auto plain = estimate_sinr(r, a, std::nullopt, 0, phy);
    const auto halved = estimate_sinr(r, a, linear_to_db(phy.noise_w()) + 30.0, 0, phy);
    const auto comp = estimate_sinr(r, a, -100.0, 0, phy);
    for (int i = 0; i < r.num_devices(); ++i) {
        const double expect = phy.pmax_w() * r.serving_gain(0, i) / phy.noise_w();
        CHECK_THAT(plain[i], WithinRel(expect, 1e-12));
        CHECK_THAT(halved[i], WithinRel(expect / 2.0, 1e-9));
        CHECK_THAT(comp[i], WithinRel(phy.pmax_w() * r.serving_gain(0, i) / (phy.noise_w() + 1e-13), 1e-12));
    }
}

TEST_CASE("lone device never retransmits", "[baseline]")
{
    const Realization r = make(1, 1, true, 7);
    const ScAssignment a = round_robin_assign(r, 1);
    const McsCatalog cat = default_mcs_catalog();
    const BaselineRun noici = run_baseline(r, a, BaselineVariant::NoIci, std::nullopt, cat);
    const BaselineRun retx = run_baseline(r, a, BaselineVariant::ReTx, -100.0, cat);
    CHECK(noici.rate_grid() == retx.rate_grid());
    CHECK(retx.delay_frames == std::vector<int>{0});
    const McsTable& t = cat.at(Tech::NbIot);
    for (int s = 0; s < r.timeslots; ++s) {
        const double gamma = PhyParams{}.pmax_w() * r.serving_gain(s, 0) / PhyParams{}.noise_w();
        CHECK(noici.frames[s].effective_rate[0] == discrete_rate_f(gamma, t));
    }
}

TEST_CASE("effective rate is the estimate or zero", "[baseline]")
{
    const McsCatalog cat = default_mcs_catalog();
    for (std::uint64_t seed = 10; seed < 20; ++seed) {
        const Realization r = make(3, 3, true, seed);
        const ScAssignment a = round_robin_assign(r, 3);
        for (auto v : {BaselineVariant::NoIci, BaselineVariant::Ici, BaselineVariant::ReTx}) {
            const BaselineRun run = run_baseline(r, a, v, -100.0, cat);
            REQUIRE(run.frames.size() == 20);
            for (const auto& f : run.frames) {
                for (int i = 0; i < r.num_devices(); ++i) {
                    CHECK((f.effective_rate[i] == 0.0 || f.effective_rate[i] == f.estimated_rate[i]));
                    CHECK(f.power_w[i] == PhyParams{}.pmax_w());
                    if (v != BaselineVariant::ReTx) {
                        CHECK_FALSE(f.retransmit[i]);
                    }
                }
            }
        }
    }
}

TEST_CASE("no fading gives identical decisions in every timeslot", "[baseline]")
{
    const McsCatalog cat = default_mcs_catalog();
    const Realization r = make(3, 3, false, 21);
    const ScAssignment a = round_robin_assign(r, 3);
    for (auto v : {BaselineVariant::NoIci, BaselineVariant::Ici}) {
        const BaselineRun run = run_baseline(r, a, v, -95.0, cat);
        for (const auto& f : run.frames) {
            CHECK(f.estimated_mcs == run.frames[0].estimated_mcs);
            CHECK(f.effective_rate == run.frames[0].effective_rate);
        }
    }
}

TEST_CASE("ReTx dominates ICI without fading", "[baseline]")
{
    const McsCatalog cat = default_mcs_catalog();
    for (std::uint64_t seed = 30; seed < 60; ++seed) {
        const Realization r = make(3, 3, false, seed);
        const ScAssignment a = round_robin_assign(r, 3);
        for (double comp : default_compensation_grid()) {
            const BaselineRun ici = run_baseline(r, a, BaselineVariant::Ici, comp, cat);
            const BaselineRun retx = run_baseline(r, a, BaselineVariant::ReTx, comp, cat);
            const auto gi = ici.rate_grid();
            const auto gr = retx.rate_grid();
            for (std::size_t k = 0; k < gi.size(); ++k) {
                CHECK(gr[k] >= gi[k]);
            }
            const MetricsRecord mi = metrics_of(r, ici);
            const MetricsRecord mr = metrics_of(r, retx);
            CHECK(mr.am >= mi.am);
            CHECK(mr.gm >= mi.gm);
            CHECK(mr.hm >= mi.hm);
        }
    }
}

TEST_CASE("ReTx two-frame sequence", "[baseline]")
{
    // Build a realization where device 0's estimate overshoots: strong co-channel
    // interferer, effective SINR at a lower but valid level.
    const PhyParams phy;
    const McsCatalog cat = default_mcs_catalog();
    const McsTable& t = cat.at(Tech::NbIot);
    Realization r;
    r.layout = build_layout(2, 500.0, false);
    r.devices = {{0, 0, {100.0, 0.0}, Tech::NbIot}, {1, 1, {600.0, 0.0}, Tech::NbIot}};
    r.timeslots = 4;
    r.large_scale_db.assign(4, 0.0);
    const double n0 = phy.noise_w();
    const double pmax = phy.pmax_w();
    // Device 0: noise-only SINR 2*gamma_max, effective SINR at level 2 threshold * 1.01.
    const double g00 = 2.0 * t.gamma_max * n0 / pmax;
    const double eff = t.thresholds[2] * 1.01;
    const double g10 = (pmax * g00 / eff - n0) / pmax;
    const double g11 = 1e-6;
    const double g01 = 1e-30;
    for (int s = 0; s < r.timeslots; ++s) {
        r.gains.insert(r.gains.end(), {g00, g01, g10, g11});
    }
    const ScAssignment a = round_robin_assign(r, 1);
    const BaselineRun ici = run_baseline(r, a, BaselineVariant::Ici, -200.0, cat);
    const BaselineRun retx = run_baseline(r, a, BaselineVariant::ReTx, -200.0, cat);
    const int top = t.levels() - 1;
    for (int s = 0; s < 4; ++s) {
        CHECK(ici.frames[s].estimated_mcs[0] == top);
        CHECK(ici.frames[s].effective_rate[0] == 0.0);
    }
    // New transmission fails, resend at level 2 succeeds, then the cycle repeats.
    CHECK(retx.frames[0].estimated_mcs[0] == top);
    CHECK(retx.frames[0].effective_rate[0] == 0.0);
    CHECK(retx.frames[1].retransmit[0]);
    CHECK(retx.frames[1].estimated_mcs[0] == 2);
    CHECK(retx.frames[1].effective_rate[0] == t.efficiencies[2]);
    CHECK_FALSE(retx.frames[2].retransmit[0]);
    CHECK(retx.frames[2].effective_rate[0] == 0.0);
    CHECK(retx.frames[3].effective_rate[0] == t.efficiencies[2]);
    CHECK(retx.delay_frames[0] == 2);
    // Device 1 sees almost no interference and always succeeds.
    CHECK(retx.delay_frames[1] == 0);
}

TEST_CASE("ICI variants require a compensation value", "[baseline]")
{
    const Realization r = make(1, 1, false, 8, 2);
    const ScAssignment a = round_robin_assign(r, 1);
    const McsCatalog cat = default_mcs_catalog();
    CHECK_THROWS_AS(run_baseline(r, a, BaselineVariant::Ici, std::nullopt, cat), ConfigError);
    CHECK_THROWS_AS(run_baseline(r, a, BaselineVariant::ReTx, std::nullopt, cat), ConfigError);
    CHECK_NOTHROW(run_baseline(r, a, BaselineVariant::NoIci, std::nullopt, cat));
}

TEST_CASE("baseline trace CSV", "[baseline]")
{
    const Realization r = make(1, 1, false, 9, 2);
    const BaselineRun run =
        run_baseline(r, round_robin_assign(r, 1), BaselineVariant::NoIci, std::nullopt, default_mcs_catalog());
    std::ostringstream out;
    write_baseline_trace(out, run);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,device,sc,mcs,est_rate,eff_rate,retx");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
    }
    CHECK(rows == 2);
}
