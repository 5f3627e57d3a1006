#include <gtest/gtest.h>

#include <random>

#include "flowlens/variability.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace flowlens;
using testutil::tcp;

TEST(Throughput, SinglePacket) {
  std::vector<PacketRecord> p{tcp(0, "10.0.0.1", "192.0.2.1", 80, 1, 64, 700)};
  auto s = throughput_series(p, 0.1);
  ASSERT_EQ(s.values.size(), 1u);
  EXPECT_DOUBLE_EQ(s.values[0], 56000.0);
  EXPECT_FALSE(s.skewness);
}

TEST(Throughput, ZeroFilledGaps) {
  std::vector<PacketRecord> p{tcp(0, "10.0.0.1", "192.0.2.1", 80, 1, 64, 500), tcp(50'000, "10.0.0.1", "192.0.2.1", 80, 1, 64, 500),
                              tcp(250'000, "10.0.0.1", "192.0.2.1", 80, 1, 64, 500)};
  auto s = throughput_series(p, 0.1);
  ASSERT_EQ(s.values.size(), 3u);
  EXPECT_DOUBLE_EQ(s.values[0], 80000.0);
  EXPECT_DOUBLE_EQ(s.values[1], 0.0);
  EXPECT_DOUBLE_EQ(s.values[2], 40000.0);
  EXPECT_NEAR(s.mean_bps, 40000.0, 1e-9);
}

TEST(Throughput, ConstantRateAtEnsembleAverage) {
  // 18.80 Mbit/s at 700-byte packets: one packet every 700*8/18.8e6 s.
  const double rate = 18.80e6;
  const double gap_s = 700.0 * 8.0 / rate;
  std::vector<PacketRecord> p;
  for (int i = 0; i * gap_s < 60.0; ++i) {
    p.push_back(tcp(static_cast<std::int64_t>(i * gap_s * 1e6), "10.0.0.1", "192.0.2.1", 80, 1, 64, 700));
  }
  log::set_quiet(true);
  auto s = throughput_series(p, 0.1);
  log::set_quiet(false);
  EXPECT_NEAR(s.mean_bps, rate, rate * 0.01);
}

TEST(Throughput, EmptyTraceIsFlagged) {
  log::set_quiet(true);
  auto s = throughput_series({}, 0.1);
  log::set_quiet(false);
  EXPECT_TRUE(s.values.empty());
  EXPECT_FALSE(s.skewness);
  EXPECT_THROW(throughput_series({}, 0.0), DomainError);
}

TEST(Throughput, ByteConservation) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<std::int64_t> ts(0, 5'000'000);
    std::uniform_int_distribution<int> len(20, 1500);
    std::vector<PacketRecord> p(1 + rng() % 500);
    std::uint64_t total = 0;
    for (auto& r : p) {
      r.ts_us = ts(rng);
      r.ip_len = static_cast<std::uint16_t>(len(rng));
      total += r.ip_len;
    }
    const double interval = (1 + rng() % 50) * 0.01;
    log::set_quiet(true);
    auto s = throughput_series(p, interval);
    log::set_quiet(false);
    EXPECT_EQ(s.total_bytes(), total);
    std::uint64_t from_rates = 0;
    for (double v : s.values) from_rates += static_cast<std::uint64_t>(std::llround(v * interval / 8.0));
    EXPECT_EQ(from_rates, total);
  }
}

TEST(Skewness, KnownValues) {
  std::vector<double> sym{1, 2, 3};
  EXPECT_NEAR(skewness(sym), 0.0, 1e-15);
  // m2 = 0.1875, m3 = 0.09375 -> g1 = 2/sqrt(3)
  std::vector<double> x{0, 0, 0, 1};
  EXPECT_NEAR(skewness(x), 1.1547005383792517, 1e-12);
}

TEST(Skewness, Errors) {
  std::vector<double> two{1, 2};
  EXPECT_THROW(skewness(two), DomainError);
  std::vector<double> flat{0.1, 0.1, 0.1, 0.1};
  EXPECT_THROW(skewness(flat), DomainError);
}

TEST(Skewness, MatchesThreePassOracle) {
  std::mt19937_64 rng(1234);
  std::lognormal_distribution<double> d(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(3 + rng() % 2000);
    for (auto& v : x) v = d(rng) * 1e6;
    const double ref = oracle::skewness_three_pass(x);
    EXPECT_NEAR(skewness(x), ref, 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST(Skewness, InvariantUnderPositiveAffineMaps) {
  std::mt19937_64 rng(5);
  std::gamma_distribution<double> d(2.0, 3.0);
  std::vector<double> x(5000);
  for (auto& v : x) v = d(rng);
  const double g = skewness(x);
  for (auto [a, b] : {std::pair{2.0, 0.0}, std::pair{0.5, 100.0}, std::pair{1e3, -7.0}}) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = a * x[i] + b;
    EXPECT_NEAR(skewness(y), g, 1e-9);
  }
}

TEST(Skewness, ExponentialAndNormalSamples) {
  std::mt19937_64 rng(42);
  std::exponential_distribution<double> e(1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> xe(100000), xn(100000);
  for (auto& v : xe) v = e(rng);
  for (auto& v : xn) v = n(rng);
  EXPECT_NEAR(skewness(xe), 2.0, 0.1);
  EXPECT_LT(std::abs(skewness(xn)), 0.05);
}

TEST(Gate, ThresholdIsInclusive) {
  ThroughputSeries s;
  const TraceGate gate{0.4};
  s.skewness = 0.41;
  EXPECT_TRUE(gate_trace(s, gate));
  s.skewness = 0.39;
  EXPECT_FALSE(gate_trace(s, gate));
  s.skewness = 0.4;
  EXPECT_TRUE(gate_trace(s, gate));
  s.skewness.reset();
  log::set_quiet(true);
  EXPECT_FALSE(gate_trace(s, gate));
  log::set_quiet(false);
}
