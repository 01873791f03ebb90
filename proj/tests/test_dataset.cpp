#include <gtest/gtest.h>

#include <filesystem>

#include "poseforge/dataset.hpp"
#include "poseforge/io.hpp"

namespace fs = std::filesystem;
using namespace poseforge;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("poseforge_dataset_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir / "frames");
  return dir;
}

void write_gray(const fs::path& path, int w, int h, std::uint8_t value) {
  write_pgm(path, GrayImage::Constant(h, w, value));
}

}  // namespace

TEST(Iou, IdenticalBoxes) {
  const BoundingBox a{0, 0, 10, 10};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
}

TEST(Iou, DisjointBoxes) { EXPECT_DOUBLE_EQ(iou(BoundingBox{0, 0, 10, 10}, BoundingBox{20, 20, 30, 30}), 0.0); }

TEST(Iou, HalfOverlapIsOneThird) {
  // intersection 5*10 = 50, union 100 + 100 - 50 = 150
  EXPECT_NEAR(iou(BoundingBox{0, 0, 10, 10}, BoundingBox{5, 0, 15, 10}), 50.0 / 150.0, 1e-15);
}

TEST(Iou, SymmetricAndBounded) {
  const BoundingBox a{1.5, 2, 7, 9}, b{3, 0.5, 12, 6};
  EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
  EXPECT_GT(iou(a, b), 0.0);
  EXPECT_LT(iou(a, b), 1.0);
}

TEST(CropResize, FullBoxIsIdentity) {
  GrayImage img(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img(y, x) = static_cast<std::uint8_t>(y * 31 + x * 7);
  const ImageF out = crop_resize(img, BoundingBox{0, 0, 8, 8}, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_FLOAT_EQ(out(y, x), img(y, x));
}

TEST(CropResize, ConstantImageGivesConstantOutput) {
  const GrayImage img = GrayImage::Constant(20, 30, 77);
  const ImageF out = crop_resize(img, BoundingBox{3.3, 2.1, 17.9, 15.2}, 13);
  EXPECT_TRUE((out.array() == 77.0f).all());
}

TEST(CropResize, CheckerboardBilinearWeights) {
  GrayImage img(2, 2);
  img << 0, 255, 255, 0;
  const ImageF out = crop_resize(img, BoundingBox{0, 0, 2, 2}, 4);
  // Output centers 0.25, 0.75, 1.25, 1.75 sample at source positions 0, 0.25, 0.75, 1 after
  // the half-pixel shift and edge clamp. On this checkerboard f(x, y) = 255 (x + y - 2xy).
  const double pos[4] = {0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double fx = pos[j], fy = pos[i];
      EXPECT_NEAR(out(i, j), 255.0 * (fx + fy - 2 * fx * fy), 1e-4) << i << "," << j;
    }
  }
  EXPECT_NEAR(out(1, 1), 95.625, 1e-4);
}

TEST(CropResize, OutsideImageIsZero) {
  const GrayImage img = GrayImage::Constant(10, 10, 200);
  const ImageF out = crop_resize(img, BoundingBox{-10, 0, 10, 10}, 4);
  EXPECT_EQ(out(0, 0), 0.0f);
  EXPECT_EQ(out(0, 3), 200.0f);
}

TEST(Manifest, TwoClipRoundTrip) {
  const fs::path dir = scratch("roundtrip");
  DatasetManifest m;
  m.root = dir;
  for (const std::string id : {"b", "a"}) {
    ClipRecord c{id, {}};
    for (int f : {0, 1, 2}) {
      const fs::path rel = fs::path("frames") / (id + std::to_string(f) + ".pgm");
      write_gray(dir / rel, 16, 12, static_cast<std::uint8_t>(f * 10));
      c.frames.push_back({f, rel, BoundingBox{1, 2, 9.5, 11}});
    }
    m.clips.push_back(c);
  }
  write_manifest(m, dir / "manifest.tsv");
  const DatasetManifest back = load_manifest(dir / "manifest.tsv");
  ASSERT_EQ(back.clips.size(), 2u);
  EXPECT_EQ(back.clips[0].video_id, "a");
  EXPECT_EQ(back.clips[1].video_id, "b");
  for (const auto& c : back.clips) {
    ASSERT_EQ(c.frames.size(), 3u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(c.frames[i].frame_index, i);
    EXPECT_EQ(c.frames[0].box, (BoundingBox{1, 2, 9.5, 11}));
  }
  const VideoClip clip = load_clip(back, back.clips[0]);
  ASSERT_EQ(clip.frames.size(), 3u);
  EXPECT_EQ(clip.frames[2].image(0, 0), 20);
  EXPECT_EQ(clip.position_of(1), 1);
  EXPECT_EQ(clip.position_of(5), -1);
}

TEST(Manifest, MissingFrameFileNamesThePath) {
  const fs::path dir = scratch("missing");
  write_text_file(dir / "manifest.tsv", "v\t0\tframes/nothere.pgm\t0,0,4,4\n");
  try {
    load_manifest(dir / "manifest.tsv");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("nothere.pgm"), std::string::npos);
  }
}

TEST(Manifest, InvertedBoxIsRejected) {
  const fs::path dir = scratch("inverted");
  write_gray(dir / "frames/a.pgm", 8, 8, 0);
  write_text_file(dir / "manifest.tsv", "v\t0\tframes/a.pgm\t5,0,5,4\n");
  EXPECT_THROW(load_manifest(dir / "manifest.tsv"), Error);
}

TEST(Manifest, BoxOutsideImageIsRejected) {
  const fs::path dir = scratch("outside");
  write_gray(dir / "frames/a.pgm", 8, 8, 0);
  write_text_file(dir / "manifest.tsv", "v\t0\tframes/a.pgm\t0,0,9,4\n");
  EXPECT_THROW(load_manifest(dir / "manifest.tsv"), Error);
}

TEST(Manifest, DuplicateFrameIndexIsRejected) {
  const fs::path dir = scratch("dup");
  write_gray(dir / "frames/a.pgm", 8, 8, 0);
  write_text_file(dir / "manifest.tsv", "v\t0\tframes/a.pgm\t0,0,4,4\nv\t0\tframes/a.pgm\t0,0,4,4\n");
  EXPECT_THROW(load_manifest(dir / "manifest.tsv"), Error);
}

TEST(Manifest, MissingManifestIsConfigError) {
  EXPECT_THROW(load_manifest("/nonexistent/manifest.tsv"), ConfigError);
}

TEST(Pnm, ColorImagesAreAveraged) {
  const fs::path dir = scratch("ppm");
  std::string bytes = "P6\n2 1\n255\n";
  bytes += std::string{char(30), char(60), char(90), char(0), char(0), char(3)};
  write_text_file(dir / "c.ppm", bytes);
  const GrayImage g = read_pnm(dir / "c.ppm");
  ASSERT_EQ(g.cols(), 2);
  EXPECT_EQ(g(0, 0), 60);
  EXPECT_EQ(g(0, 1), 1);
}
