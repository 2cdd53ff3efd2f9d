#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "gsp/sim.hpp"

using namespace gsp;

namespace {

const NetworkSpec kRef = NetworkSpec::reference();

SimConfig config(SimMode mode, double horizon, std::uint64_t seed) {
    SimConfig c;
    c.mode = mode;
    c.horizon = horizon;
    c.seed = seed;
    return c;
}

void expect_conservation(const EpisodeData& d) {
    EXPECT_EQ(d.arrivals + d.initial_jobs, d.completions + d.censored);
    EXPECT_EQ(d.final_state.l1(), d.censored);
    EXPECT_GE(d.time_integral_queue, 0.0);
    for (const auto& j : d.completed_jobs) {
        ASSERT_TRUE(j.t_depart.has_value());
        EXPECT_GT(j.system_time, 0.0);
        EXPECT_NEAR(j.system_time, *j.t_depart - j.t_arrival, 1e-9);
    }
}

}  // namespace

TEST(Config, RejectsInvalidProbabilities) {
    SimConfig c;
    c.dt = 10.0;
    EXPECT_THROW(validate(c, kRef), ConfigInvalid);
    c.dt = 0.0;
    EXPECT_THROW(validate(c, kRef), ConfigInvalid);
    c = SimConfig{};
    c.horizon = -1;
    EXPECT_THROW(validate(c, kRef), ConfigInvalid);
    c = SimConfig{};
    c.mode = SimMode::event_driven;
    c.dt = 10.0;  // ignored without a time grid
    EXPECT_NO_THROW(validate(c, kRef));
}

TEST(Episode, NoArrivalsFromEmptyState) {
    const NetworkSpec spec(kRef.service_rates(), 0.0);
    for (auto mode : {SimMode::bernoulli_dt, SimMode::event_driven}) {
        const auto d = run_episode(spec, SspPolicy{}, config(mode, 1000, 1));
        EXPECT_EQ(d.arrivals, 0);
        EXPECT_TRUE(d.completed_jobs.empty());
        EXPECT_EQ(d.time_integral_queue, 0.0);
        EXPECT_THROW(average_system_time(d), NoCompletedJobs);
    }
}

TEST(Episode, InitialJobsDrainAndAreNotRecorded) {
    const NetworkSpec spec(kRef.service_rates(), 0.0);
    for (auto mode : {SimMode::bernoulli_dt, SimMode::event_driven}) {
        auto c = config(mode, 1e4, 2);
        c.initial = TrafficState({2, 1, 0, 3, 1, 0, 2});
        const auto d = run_episode(spec, SspPolicy{}, c);
        EXPECT_EQ(d.initial_jobs, 9);
        EXPECT_EQ(d.completions, 9);
        EXPECT_TRUE(d.completed_jobs.empty());
        EXPECT_GT(d.time_integral_queue, 0.0);
        expect_conservation(d);
    }
}

TEST(Episode, ConservationUnderEveryPolicy) {
    const GspPolicy gsp({1.2, 1.1}, kRef.service_rates());
    const BernoulliPolicy ob(BernoulliWeights({0.28, 0.20, 0.52}));
    for (auto mode : {SimMode::bernoulli_dt, SimMode::event_driven}) {
        for (std::uint64_t seed : {1, 2, 3}) {
            auto c = config(mode, 2e4, seed);
            expect_conservation(run_episode(kRef, gsp, c));
            expect_conservation(run_episode(kRef, SspPolicy{}, c));
            expect_conservation(run_episode(kRef, ob, c));
        }
    }
}

TEST(Episode, EpochLimit) {
    auto c = config(SimMode::event_driven, 1e9, 4);
    c.max_epochs = 500;
    const auto d = run_episode(kRef, SspPolicy{}, c);
    EXPECT_EQ(d.epochs, 500);
    expect_conservation(d);
}

TEST(Episode, DeterministicForFixedSeed) {
    const GspPolicy gsp({1.2, 1.1}, kRef.service_rates());
    for (auto mode : {SimMode::bernoulli_dt, SimMode::event_driven}) {
        std::ostringstream a, b, c;
        write_jobs_csv(a, run_episode(kRef, gsp, config(mode, 2e4, 9)));
        write_jobs_csv(b, run_episode(kRef, gsp, config(mode, 2e4, 9)));
        write_jobs_csv(c, run_episode(kRef, gsp, config(mode, 2e4, 10)));
        EXPECT_EQ(a.str(), b.str());
        EXPECT_NE(a.str(), c.str());
    }
}

TEST(Episode, PathsAndStateSnapshotsAreConsistent) {
    const GspPolicy gsp({1.2, 1.1}, kRef.service_rates());
    const auto d = run_episode(kRef, gsp, config(SimMode::event_driven, 2e4, 5));
    ASSERT_FALSE(d.completed_jobs.empty());
    for (const auto& j : d.completed_jobs) {
        // The recorded path is one the router could have picked from the snapshot.
        const auto cand = gsp.route_candidates(j.state_at_arrival);
        EXPECT_NE(std::find(cand.begin(), cand.end(), j.path), cand.end());
        ASSERT_TRUE(j.cost_at_arrival.has_value());
        EXPECT_NEAR(*j.cost_at_arrival, weighted_costs(j.state_at_arrival, gsp.params(), kRef.service_rates())[index(j.path)],
                    1e-9);
    }
}

// Two M/M/1 queues in tandem: E[T] = 2 / (mu - lambda).
TEST(Oracle, TandemQueues) {
    const NetworkSpec spec({0.2, 0.2, 0.9, 0.9, 0.9}, 0.05);
    const BernoulliPolicy only12(BernoulliWeights({1.0, 0.0, 0.0}));
    double total = 0;
    const int runs = 4;
    for (int r = 0; r < runs; ++r) {
        auto c = config(SimMode::event_driven, 1e6, episode_seed(77, r));
        total += average_system_time(run_episode(spec, only12, c));
    }
    EXPECT_NEAR(total / runs, 2.0 / (0.2 - 0.05), 0.03 * 2.0 / 0.15);
}

TEST(Oracle, LittlesLaw) {
    const GspPolicy gsp({1.2, 1.1}, kRef.service_rates());
    for (auto mode : {SimMode::bernoulli_dt, SimMode::event_driven}) {
        const auto d = run_episode(kRef, gsp, config(mode, 1e6, 6));
        const double w = average_system_time(d);
        const double lambda_hat = static_cast<double>(d.arrivals) / d.duration;
        EXPECT_LT(std::abs(w - time_average_queue(d) / lambda_hat) / w, 0.02) << mode_name(mode);
    }
}

TEST(Oracle, UtilizationMatchesFlowBalance) {
    const BernoulliWeights w({0.28, 0.20, 0.52});
    const auto d = run_episode(kRef, BernoulliPolicy(w), config(SimMode::event_driven, 1e6, 12));
    const auto rho = flow_balance_utilization(kRef, w);
    const auto u = utilization(d);
    for (int n = 0; n < 5; ++n) {
        // Busy periods correlate the busy indicator, so allow a loose band
        // around the binomial sigma computed from the number of completions.
        const double served = static_cast<double>(d.service_samples[n].size());
        const double sigma = std::sqrt(served) / kRef.service_rate(n + 1) / d.duration;
        EXPECT_NEAR(u[n], rho[n], std::max(3 * sigma, 0.02 * rho[n])) << "server " << n + 1;
    }
}

TEST(Rates, DeterministicReciprocal) {
    RateHistory h;
    h.interarrival_sum = 6.0;
    h.interarrival_count = 3;
    const auto e = estimate_rates(h);
    EXPECT_DOUBLE_EQ(e.lambda, 0.5);
    for (double m : e.mu) EXPECT_DOUBLE_EQ(m, 0.5);
}

TEST(Rates, ServiceEstimatesConverge) {
    const BernoulliPolicy ob(BernoulliWeights({0.28, 0.20, 0.52}));
    RateHistory h;
    h.accumulate(run_episode(kRef, ob, config(SimMode::event_driven, 2e6, 8)));
    const auto e = estimate_rates(h);
    const double n3 = static_cast<double>(h.service_count[2]);
    EXPECT_NEAR(e.mu[2], 0.25, 3 * 0.25 / std::sqrt(n3));
    EXPECT_NEAR(e.lambda, 0.2, 3 * 0.2 / std::sqrt(static_cast<double>(h.interarrival_count)));
}

TEST(Rates, UnsampledServerKeepsPrior) {
    // Path 45 unused: server 4 never serves.
    const BernoulliPolicy ob(BernoulliWeights({0.5, 0.5, 0.0}));
    RateHistory h;
    h.accumulate(run_episode(kRef, ob, config(SimMode::event_driven, 1e4, 8)));
    EXPECT_EQ(h.service_count[3], 0);
    EXPECT_DOUBLE_EQ(estimate_rates(h).mu[3], 0.5);
}

TEST(Rates, LambdaUnbiasedAcrossSeeds) {
    const int seeds = 100;
    std::vector<double> est;
    for (int s = 0; s < seeds; ++s) {
        RateHistory h;
        h.accumulate(run_episode(kRef, SspPolicy{}, config(SimMode::event_driven, 2e4, episode_seed(3, s))));
        est.push_back(estimate_rates(h).lambda);
    }
    const double mean = std::accumulate(est.begin(), est.end(), 0.0) / seeds;
    double var = 0;
    for (double e : est) var += (e - mean) * (e - mean);
    const double se = std::sqrt(var / (seeds - 1) / seeds);
    EXPECT_LT(std::abs(mean - 0.2), 3 * se + 1e-4);
}

TEST(Modes, ParseNames) {
    EXPECT_EQ(parse_mode("bernoulli_dt"), SimMode::bernoulli_dt);
    EXPECT_EQ(parse_mode("event_driven"), SimMode::event_driven);
    EXPECT_THROW(parse_mode("continuous"), ConfigInvalid);
}

TEST(Seeds, EpisodeSeedsDiffer) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t b : {0, 1, 2})
        for (std::uint64_t i = 0; i < 100; ++i) seen.insert(episode_seed(b, i));
    EXPECT_EQ(seen.size(), 300u);
}
