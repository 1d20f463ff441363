#include "tcmp/augment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "tcmp/rng.hpp"

using namespace tcmp;

namespace {

ContextWindow window_of_length(int len, Rng& rng, double step_x = 2.0) {
  std::vector<BoundingBox> boxes;
  BoundingBox b{rng.uniform(50, 200), rng.uniform(50, 200), 40, 80};
  for (int i = 0; i < len; ++i) {
    boxes.push_back(b);
    b.x += step_x;
    b.y += rng.uniform(-1, 1);
  }
  return build_context(boxes, {640, 480});
}

}  // namespace

TEST(AddNoise, ZeroSigmaLeavesBatchUnchanged) {
  Rng gen(1), noise_rng(2);
  std::vector<ContextWindow> batch{window_of_length(8, gen), window_of_length(5, gen)};
  const auto before = batch;
  add_noise(batch, {0.0, 0.0}, noise_rng);
  for (size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(batch[i].entries.size(), before[i].entries.size());
    for (size_t t = 0; t < batch[i].entries.size(); ++t) {
      EXPECT_EQ(batch[i].entries[t], before[i].entries[t]);
    }
  }
}

TEST(AddNoise, WindowStaysSelfConsistent) {
  Rng gen(3);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng noise_rng(seed);
    std::vector<ContextWindow> batch{window_of_length(12, gen)};
    add_noise(batch, {0.0, 0.01}, noise_rng);
    EXPECT_TRUE(batch[0].self_consistent(1e-12));
    EXPECT_EQ(batch[0].entries.front().dx, 0.0);
  }
}

TEST(AddNoise, SamplingStatistics) {
  // 1e5 draws at sigma = 0.001: sample mean within 3*sigma/sqrt(n), sample
  // stddev within 5% of sigma.
  const double sigma = 0.001;
  const int n_windows = 12500;  // 12500 windows x 2 entries x 4 components = 1e5 draws
  Rng gen(4), noise_rng(5);
  std::vector<ContextWindow> batch;
  std::vector<ContextWindow> clean;
  for (int i = 0; i < n_windows; ++i) batch.push_back(window_of_length(2, gen));
  clean = batch;
  add_noise(batch, {0.0, sigma}, noise_rng);

  std::vector<double> draws;
  for (size_t w = 0; w < batch.size(); ++w) {
    for (size_t t = 0; t < batch[w].entries.size(); ++t) {
      draws.push_back(batch[w].entries[t].x - clean[w].entries[t].x);
      draws.push_back(batch[w].entries[t].y - clean[w].entries[t].y);
      draws.push_back(batch[w].entries[t].w - clean[w].entries[t].w);
      draws.push_back(batch[w].entries[t].h - clean[w].entries[t].h);
    }
  }
  const double n = static_cast<double>(draws.size());
  ASSERT_GE(n, 1e5);
  double mean = 0;
  for (double d : draws) mean += d;
  mean /= n;
  double var = 0;
  for (double d : draws) var += (d - mean) * (d - mean);
  var /= n - 1;
  EXPECT_NEAR(mean, 0.0, 3 * sigma / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(var), sigma, 0.05 * sigma);
}

TEST(AddNoise, FixedSeedIsReproducible) {
  Rng gen(6);
  std::vector<ContextWindow> a{window_of_length(9, gen)};
  auto b = a;
  Rng r1(99), r2(99);
  add_noise(a, {0.0, 0.002}, r1);
  add_noise(b, {0.0, 0.002}, r2);
  for (size_t t = 0; t < a[0].entries.size(); ++t) EXPECT_EQ(a[0].entries[t], b[0].entries[t]);
}

TEST(RandomTruncate, MinimumLengthWindowOnlyGetsMotionReset) {
  Rng gen(7), rng(8);
  std::vector<ContextWindow> batch{window_of_length(4, gen)};
  const auto before = batch[0];
  random_truncate(batch, {4}, rng);
  ASSERT_EQ(batch[0].entries.size(), 4u);
  EXPECT_EQ(batch[0].entries.front().dx, 0.0);  // no-op: already zero
  for (size_t t = 0; t < 4; ++t) EXPECT_EQ(batch[0].entries[t], before.entries[t]);
}

TEST(RandomTruncate, ShortWindowsAreSkippedAndFlagged) {
  Rng gen(9), rng(10);
  std::vector<ContextWindow> batch{window_of_length(2, gen), window_of_length(8, gen)};
  const auto short_before = batch[0];
  const TruncationResult result = random_truncate(batch, {4}, rng);
  ASSERT_EQ(result.skipped.size(), 1u);
  EXPECT_EQ(result.skipped[0], 0u);
  for (size_t t = 0; t < 2; ++t) EXPECT_EQ(batch[0].entries[t], short_before.entries[t]);
}

TEST(RandomTruncate, LengthsStayInRange) {
  Rng gen(11), rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ContextWindow> batch{window_of_length(16, gen)};
    random_truncate(batch, {4}, rng);
    EXPECT_GE(batch[0].entries.size(), 4u);
    EXPECT_LE(batch[0].entries.size(), 16u);
    EXPECT_TRUE(batch[0].self_consistent(1e-12));
    EXPECT_EQ(batch[0].entries.front().dx, 0.0);
  }
}

TEST(RandomTruncate, KeptLengthsAreUniform) {
  // Chi-squared uniformity over {4..16} with 1e4 draws; 12 degrees of
  // freedom, critical value 26.217 at p = 0.01.
  Rng gen(13), rng(14);
  const int n = 10000;
  std::map<size_t, int> counts;
  const ContextWindow base = window_of_length(16, gen);
  for (int i = 0; i < n; ++i) {
    std::vector<ContextWindow> batch{base};
    random_truncate(batch, {4}, rng);
    counts[batch[0].entries.size()] += 1;
  }
  ASSERT_EQ(counts.size(), 13u);
  const double expected = n / 13.0;
  double chi2 = 0;
  for (const auto& [len, count] : counts) {
    chi2 += (count - expected) * (count - expected) / expected;
  }
  EXPECT_LT(chi2, 26.217);
}

TEST(RandomTruncate, FixedSeedIsReproducible) {
  Rng gen(15);
  const ContextWindow base = window_of_length(16, gen);
  std::vector<ContextWindow> a(10, base), b(10, base);
  Rng r1(123), r2(123);
  random_truncate(a, {4}, r1);
  random_truncate(b, {4}, r2);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].entries.size(), b[i].entries.size());
}
