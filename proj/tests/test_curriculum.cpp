#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "poseforge/curriculum.hpp"

namespace fs = std::filesystem;
using namespace poseforge;
using namespace poseforge::curriculum;

namespace {

std::vector<flow::MotionScore> scores(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "scores");
  std::vector<flow::MotionScore> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"clip" + std::to_string(i % 7), i, uniform01(rng) * 20});
  }
  return out;
}

}  // namespace

TEST(Curriculum, ThousandSamplesDefaultBlockSizes) {
  const auto s = build_curriculum(scores(1000, 1), kDefaultFractions, 250);
  ASSERT_EQ(s.blocks.size(), 7u);
  const std::vector<std::size_t> expected = {50, 70, 100, 140, 190, 200, 250};
  for (std::size_t b = 0; b < 7; ++b) EXPECT_EQ(s.blocks[b].size(), expected[b]);
  EXPECT_EQ(s.size(), 1000u);
}

TEST(Curriculum, BlocksAreOrderedByDescendingRatio) {
  const auto s = build_curriculum(scores(333, 2), kDefaultFractions, 10);
  double prev = 1e300;
  for (const auto& block : s.ratios) {
    for (double r : block) {
      EXPECT_LE(r, prev);
      prev = r;
    }
  }
}

TEST(Curriculum, TiesFallBackToFrameOrder) {
  std::vector<flow::MotionScore> sc;
  for (const std::string id : {"b", "a", "c"}) {
    for (int f : {3, 1, 2}) sc.push_back({id, f, 1.0});
  }
  const std::vector<double> fractions = {5, 20, 25, 25, 25};
  const auto s = build_curriculum(sc, fractions, 10);
  std::vector<SampleId> flat;
  for (const auto& b : s.blocks) flat.insert(flat.end(), b.begin(), b.end());
  std::vector<SampleId> sorted = flat;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(flat, sorted);
}

TEST(Curriculum, TooFewSamplesIsAnError) {
  EXPECT_THROW(build_curriculum(scores(3, 1), kDefaultFractions, 250), Error);
}

TEST(Curriculum, FractionValidation) {
  EXPECT_NO_THROW(validate_fractions(kDefaultFractions));
  EXPECT_THROW(validate_fractions({}), ConfigError);
  EXPECT_THROW(validate_fractions({5, 7, 10, 14, 19, 20, 24}), ConfigError);
  EXPECT_THROW(validate_fractions({5, 45, 25, 25}), ConfigError);
  EXPECT_THROW(validate_fractions({25, 25, 25, 25}), ConfigError);
}

TEST(ActivePool, ReleasesOneBlockPerInterval) {
  const auto s = build_curriculum(scores(1000, 3), kDefaultFractions, 250);
  EXPECT_EQ(active_pool(s, 0).size(), 50u);
  EXPECT_EQ(active_pool(s, 249).size(), 50u);
  EXPECT_EQ(active_pool(s, 250).size(), 120u);
  EXPECT_EQ(active_pool(s, 7 * 250).size(), 1000u);
  EXPECT_EQ(active_pool(s, 1'000'000).size(), 1000u);
  EXPECT_EQ(active_block_limit(s, 6 * 250), 6);
  EXPECT_EQ(active_block_limit(s, 6 * 250 - 1), 5);
}

TEST(ActivePool, BlockZeroHoldsTheEasiestSamples) {
  const auto sc = scores(200, 4);
  const auto s = build_curriculum(sc, kDefaultFractions, 5);
  const auto pool = active_pool(s, 0);
  double min_in = 1e300, max_out = -1;
  for (const auto& m : sc) {
    if (pool.count({m.video_id, m.frame_index})) {
      min_in = std::min(min_in, m.fg_bg_ratio);
    } else {
      max_out = std::max(max_out, m.fg_bg_ratio);
    }
  }
  EXPECT_GE(min_in, max_out);
}

TEST(ActivePool, MonotoneInIteration) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto s = build_curriculum(scores(300 + 37 * static_cast<int>(seed), seed), kDefaultFractions, 7);
    auto prev = active_pool(s, 0);
    for (long it = 1; it < 70; ++it) {
      const auto cur = active_pool(s, it);
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end())) << it;
      prev = cur;
    }
  }
}

TEST(Schedule, FileRoundTrip) {
  const fs::path p = fs::temp_directory_path() / "poseforge_curriculum.tsv";
  const auto s = build_curriculum(scores(150, 5), kDefaultFractions, 40);
  write_schedule(p, s);
  const auto back = read_schedule(p, 40);
  EXPECT_EQ(back.blocks, s.blocks);
  EXPECT_EQ(back.ratios, s.ratios);
  EXPECT_EQ(back.update_interval, 40);
  for (long it : {0L, 39L, 40L, 300L}) EXPECT_EQ(active_pool(back, it), active_pool(s, it));
  fs::remove(p);
  EXPECT_THROW(read_schedule(p, 40), ConfigError);
}
