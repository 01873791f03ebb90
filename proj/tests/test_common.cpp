#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <sstream>

#include "poseforge/common.hpp"
#include "poseforge/io.hpp"

namespace fs = std::filesystem;
using namespace poseforge;

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  Rng a = make_rng(7, "batch", 3), b = make_rng(7, "batch", 3);
  Rng c = make_rng(7, "batch", 4), d = make_rng(7, "init", 3);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}

TEST(Rng, UniformHelpersStayInRange) {
  Rng r = make_rng(1, "u");
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(r);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(uniform_index(r, 7), 7u);
  }
}

TEST(ParallelFor, VisitsEveryIndexOnceForAnyThreadCount) {
  for (int threads : {1, 2, 4, 9}) {
    std::vector<std::atomic<int>> hits(103);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 5) throw Error("boom");
                            }),
               Error);
}

TEST(Io, StrictParsers) {
  EXPECT_EQ(parse_int("-12", "x"), -12);
  EXPECT_THROW(parse_int("12a", "x"), Error);
  EXPECT_THROW(parse_int("", "x"), Error);
  EXPECT_DOUBLE_EQ(parse_double("0.25", "x"), 0.25);
  EXPECT_THROW(parse_double("nope", "x"), Error);
  EXPECT_TRUE(parse_bool("true", "x"));
  EXPECT_FALSE(parse_bool("0", "x"));
  EXPECT_THROW(parse_bool("maybe", "x"), Error);
  EXPECT_EQ(parse_u64("18446744073709551615", "x"), 18446744073709551615ULL);
}

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 10.0 * 64.0 / 227.0}) {
    EXPECT_EQ(parse_double(format_double(v), "x"), v);
  }
}

TEST(Io, SplitKeepsEmptyFields) {
  const auto parts = split("a,,b", ',');
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[1], "");
}

TEST(Io, Sha256KnownVector) {
  const fs::path p = fs::temp_directory_path() / "poseforge_sha_abc.txt";
  write_text_file(p, "abc");
  EXPECT_EQ(sha256_file(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove(p);
}

TEST(Io, LittleEndianRoundTrip) {
  std::stringstream s;
  write_u32(s, 0xA1B2C3D4u);
  write_u64(s, 0x0102030405060708ULL);
  write_f32(s, -1.5f);
  const std::string bytes = s.str();
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0xD4);
  EXPECT_EQ(read_u32(s), 0xA1B2C3D4u);
  EXPECT_EQ(read_u64(s), 0x0102030405060708ULL);
  EXPECT_EQ(read_f32(s), -1.5f);
  EXPECT_THROW(read_u32(s), Error);
}
