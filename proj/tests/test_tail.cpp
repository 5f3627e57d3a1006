#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "flowlens/synth.hpp"
#include "flowlens/tail.hpp"
#include "oracles.hpp"

using namespace flowlens;

TEST(Llcd, SmallSample) {
  std::vector<std::uint64_t> s{1, 2, 3, 4};
  auto c = llcd(s);
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_DOUBLE_EQ(c.points[0].x, 1);
  EXPECT_DOUBLE_EQ(c.points[0].p, 0.75);
  EXPECT_DOUBLE_EQ(c.points[1].p, 0.5);
  EXPECT_DOUBLE_EQ(c.points[2].x, 3);
  EXPECT_DOUBLE_EQ(c.points[2].p, 0.25);
}

TEST(Llcd, ConstantSampleHasNoPoints) {
  std::vector<std::uint64_t> s{5, 5, 5, 5};
  auto c = llcd(s);
  EXPECT_TRUE(c.points.empty());
  EXPECT_EQ(c.n_samples, 4u);
  EXPECT_THROW(fit_tail(c, 1), DomainError);
}

TEST(Llcd, EmptyIsAnError) { EXPECT_THROW(llcd({}), DomainError); }

TEST(Llcd, MatchesDoubleLoopAndIsMonotone) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint64_t> s(1 + rng() % 2000);
    std::geometric_distribution<std::uint64_t> g(0.05);
    for (auto& v : s) v = 1 + g(rng);
    auto c = llcd(s);
    auto ref = oracle::llcd_double_loop(s);
    ASSERT_EQ(c.points.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_EQ(c.points[i].x, ref[i].first);
      EXPECT_NEAR(c.points[i].p, ref[i].second, 1e-15);
      EXPECT_GT(c.points[i].p, 0.0);
      EXPECT_LE(c.points[i].p, 1.0);
      if (i) {
        EXPECT_GT(c.points[i].x, c.points[i - 1].x);
        EXPECT_LE(c.points[i].p, c.points[i - 1].p);
      }
    }
  }
}

TEST(FitTail, ExactPowerLawIsRecovered) {
  LlcdCurve c;
  c.n_samples = 1'000'000;
  for (int x = 20; x <= 200; ++x) c.points.push_back({double(x), std::pow(double(x), -1.2)});
  auto f = fit_tail(c, 20);
  EXPECT_NEAR(f.alpha, 1.2, 1e-6);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-9);
  EXPECT_EQ(f.n_points, 181u);
}

TEST(FitTail, RecoversParetoShape) {
  // Classical Pareto, scale 20, shape 1.5.
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint64_t> s(10000);
  for (auto& v : s) v = static_cast<std::uint64_t>(std::ceil(20.0 * std::pow(1.0 - u(rng), -1.0 / 1.5)));
  auto f = fit_tail(llcd(s), 20);
  EXPECT_NEAR(f.alpha, 1.5, 0.1);
  EXPECT_GT(f.r_squared, 0.9);
}

TEST(FitTail, SynthesizedFlowSizes) {
  for (double alpha : {1.0, 1.5, 2.0}) {
    auto s = synth::sample_flow_sizes(alpha, 1'000'000, 100'000, 17);
    auto f = fit_tail(llcd(s), 2);
    EXPECT_NEAR(f.alpha, alpha, 0.1) << "alpha " << alpha;
  }
}

TEST(FitTail, InsufficientTail) {
  std::vector<std::uint64_t> s;
  for (int i = 1; i <= 9; ++i) s.push_back(20 + i);
  s.push_back(500);
  try {
    fit_tail(llcd(s), 20);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_STREQ(e.what(), "insufficient tail");
  }
}

TEST(FitTail, NTailCountsSamplesAtOrAboveFirstPoint) {
  std::vector<std::uint64_t> s;
  for (int x = 1; x <= 40; ++x) s.push_back(static_cast<std::uint64_t>(x));
  s.push_back(40);
  auto f = fit_tail(llcd(s), 20);
  EXPECT_EQ(f.n_tail, 22u);  // 20..40 plus the duplicate 40
  EXPECT_EQ(f.n_points, 20u);  // 20..39; 40 has p = 0
}

TEST(Llcd, CsvHasHeaderAndOneRowPerPoint) {
  std::vector<std::uint64_t> s{1, 2, 3, 4};
  std::ostringstream os;
  write_llcd_csv(os, llcd(s));
  EXPECT_EQ(os.str(), "x,p\n1,0.75\n2,0.5\n3,0.25\n");
}
