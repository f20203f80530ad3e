#include "tactfl/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

using namespace tactfl;

// Reference outputs of the splitmix64 stream (state += 0x9e3779b97f4a7c15,
// then the 30/27/31 xor-shift finalizer), computed with an independent
// implementation.
TEST(SplitMix, ReferenceVectors) {
  {
    SplitMix64 rng(0);
    EXPECT_EQ(rng.next_u64(), 0xe220a8397b1dcdafULL);
    EXPECT_EQ(rng.next_u64(), 0x6e789e6aa1b965f4ULL);
    EXPECT_EQ(rng.next_u64(), 0x06c45d188009454fULL);
    EXPECT_EQ(rng.next_u64(), 0xf88bb8a8724c81ecULL);
  }
  {
    SplitMix64 rng(1);
    EXPECT_EQ(rng.next_u64(), 0x910a2dec89025cc1ULL);
    EXPECT_EQ(rng.next_u64(), 0xbeeb8da1658eec67ULL);
  }
  {
    SplitMix64 rng(0x123456789abcdefULL);
    EXPECT_EQ(rng.next_u64(), 0x157a3807a48faa9dULL);
    EXPECT_EQ(rng.next_u64(), 0xd573529b34a1d093ULL);
  }
}

TEST(SplitMix, Mix64MatchesFirstOutput) {
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 0xdeadbeefull}) {
    SplitMix64 rng(seed);
    EXPECT_EQ(mix64(seed), rng.next_u64());
  }
}

TEST(Fnv1a, ReferenceVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("hello"), 0xa430d84680aabd0bULL);
}

TEST(DeriveSeed, DistinctStreams) {
  const std::uint64_t base = derive_seed(7, 0, 0);
  EXPECT_EQ(derive_seed(7, 0, 0), base);
  EXPECT_NE(derive_seed(7, 1, 0), base);
  EXPECT_NE(derive_seed(7, 0, 1), base);
  EXPECT_NE(derive_seed(8, 0, 0), base);
  EXPECT_NE(derive_seed(7, 1, 0), derive_seed(7, 0, 1));
}

TEST(NextDouble, RangeAndMean) {
  SplitMix64 rng(99);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.next_double();
    ASSERT_GE(v, 0.0);
    ASSERT_LT(v, 1.0);
    sum += v;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(NextUniform, RespectsBounds) {
  SplitMix64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.next_uniform(-2.0, 3.0);
    ASSERT_GE(v, -2.0);
    ASSERT_LT(v, 3.0);
  }
}

TEST(NextBelow, InRange) {
  SplitMix64 rng(8);
  for (int i = 0; i < 1000; ++i) ASSERT_LT(rng.next_below(7), 7u);
}

TEST(Gaussian, MomentsAndDeterminism) {
  SplitMix64 rng(123);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.next_gaussian();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.03);

  SplitMix64 a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_gaussian(), b.next_gaussian());
}

TEST(Gamma, MomentsMatchShape) {
  for (double alpha : {0.5, 2.0, 8.0}) {
    SplitMix64 rng(31);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = rng.next_gamma(alpha);
      ASSERT_GT(v, 0.0);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    EXPECT_NEAR(mean, alpha, 0.05 * alpha + 0.01);
    EXPECT_NEAR(var, alpha, 0.10 * alpha + 0.02);
  }
  SplitMix64 rng(1);
  EXPECT_THROW(rng.next_gamma(0.0), parameter_error);
}

TEST(Dirichlet, SimplexAndConcentration) {
  SplitMix64 rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = rng.next_dirichlet(0.1, 6);
    double sum = 0.0;
    for (double v : p) {
      ASSERT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  // Large concentration pushes every draw toward uniform.
  SplitMix64 rng2(56);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = rng2.next_dirichlet(1e6, 4);
    for (double v : p) EXPECT_NEAR(v, 0.25, 0.01);
  }
}

TEST(Categorical, HistogramMatchesWeights) {
  SplitMix64 rng(77);
  const std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
  std::vector<int> hist(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++hist[rng.next_categorical(p)];
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(static_cast<double>(hist[k]) / n, p[k], 0.01);
  }
}

TEST(Shuffle, ProducesPermutation) {
  SplitMix64 rng(13);
  std::vector<std::size_t> v(20);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);

  const auto perm = rng.permutation(50);
  auto copy = perm;
  std::sort(copy.begin(), copy.end());
  for (std::size_t i = 0; i < copy.size(); ++i) EXPECT_EQ(copy[i], i);

  SplitMix64 a(21), b(21);
  EXPECT_EQ(a.permutation(10), b.permutation(10));
}
