#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "poseforge/common.hpp"

namespace poseforge {

template <typename Scalar>
using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// H x W single-channel 8-bit image; rows index y.
using GrayImage = Grid<std::uint8_t>;
using ImageF = Grid<float>;

/// Half-open continuous rectangle [x_min, x_max) x [y_min, y_max) in pixel coordinates.
template <typename Scalar>
struct Box {
  Scalar x_min{}, y_min{}, x_max{}, y_max{};

  Scalar width() const { return x_max - x_min; }
  Scalar height() const { return y_max - y_min; }
  Scalar area() const { return width() * height(); }
  Scalar center_x() const { return (x_min + x_max) / 2; }
  Scalar center_y() const { return (y_min + y_max) / 2; }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool inside(Scalar w, Scalar h) const {
    return x_min >= 0 && y_min >= 0 && x_max <= w && y_max <= h;
  }
  bool operator==(const Box&) const = default;
};

using BoundingBox = Box<double>;

template <typename Scalar>
Scalar intersection_area(const Box<Scalar>& a, const Box<Scalar>& b) {
  const Scalar w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const Scalar h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0 || h <= 0) return Scalar(0);
  return w * h;
}

/// Intersection over union from continuous areas. Both boxes must be valid.
template <typename Scalar>
Scalar iou(const Box<Scalar>& a, const Box<Scalar>& b) {
  const Scalar inter = intersection_area(a, b);
  const Scalar uni = a.area() + b.area() - inter;
  return inter / uni;
}

struct Frame {
  std::string video_id;
  int frame_index = 0;
  GrayImage image;
  BoundingBox box;

  FrameRef ref() const { return {video_id, frame_index}; }
};

struct VideoClip {
  std::string video_id;
  std::vector<Frame> frames;  // strictly ascending frame_index

  /// Position of `frame_index` in `frames`, or -1.
  int position_of(int frame_index) const;
};

struct FrameRecord {
  int frame_index = 0;
  std::filesystem::path relative_path;
  BoundingBox box;
};

struct ClipRecord {
  std::string video_id;
  std::vector<FrameRecord> frames;
};

/// Frame file paths and boxes; images are read lazily with load_clip().
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ClipRecord> clips;  // sorted by video_id
};

/// Parses `video_id<TAB>frame_index<TAB>relative_path<TAB>x_min,y_min,x_max,y_max` records.
/// Frame files are resolved against the manifest's directory, and every box is checked
/// against its image's dimensions.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes records sorted by (video_id, frame_index) with round-trip exact coordinates.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

VideoClip load_clip(const DatasetManifest& manifest, const ClipRecord& clip);
std::vector<VideoClip> load_clips(const DatasetManifest& manifest);

/// Reads binary PGM (P5) or PPM (P6, channels averaged) files.
GrayImage read_pnm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Bilinear resample of `box` to out_size x out_size gray levels. Output pixel centers are
/// mapped into the box; samples that fall inside the image interpolate with edge clamping,
/// samples outside the image rectangle are 0.
ImageF crop_resize(const GrayImage& image, const BoundingBox& box, int out_size);
inline ImageF crop_resize(const Frame& frame, const BoundingBox& box, int out_size) {
  return crop_resize(frame.image, box, out_size);
}

inline constexpr int kNumJoints = 14;

enum Joint : int {
  kHead,
  kNeck,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
  kLeftHip,
  kRightHip,
  kLeftKnee,
  kRightKnee,
  kLeftAnkle,
  kRightAnkle,
};

extern const std::array<const char*, kNumJoints> kJointNames;

/// One row per joint, columns (x, y).
using Joints = Eigen::Matrix<double, kNumJoints, 2>;

struct PoseAnnotation {
  Joints joints = Joints::Zero();
  std::array<bool, kNumJoints> visible{};
};

struct BenchmarkExemplar {
  FrameRef query;
  std::vector<FrameRef> positives;
  std::vector<FrameRef> negatives;
};

}  // namespace poseforge
