#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "poseforge/dataset.hpp"

namespace poseforge::sampling {

struct Interval {
  double min = 0;
  double max = 0;
  bool contains(double v) const { return v >= min && v <= max; }
};

struct SamplerConfig {
  int tau_plus = 4;
  int tau_neg_min = 8;
  int tau_neg_max = 16;
  Interval sigma_pos{0.65, 0.95};
  Interval sigma_neg{0.25, 0.55};
  int negatives_per_positive = 3;
  int max_crop_attempts = 200;
  std::uint64_t seed = 0;
};

/// Throws ConfigError when the temporal ranges are not ordered or the IoU classes overlap.
void validate(const SamplerConfig& cfg);

enum class TupleOrigin { Temporal, Repetition };

/// A (anchor, candidate) frame pair from one video. For Temporal tuples the label follows
/// from delta_t alone; Repetition tuples come from mined repetition groups.
struct TemporalTuple {
  std::string video_id;
  int anchor = 0;     // frame_index
  int candidate = 0;  // frame_index
  int delta_t = 0;
  int label = 0;
  TupleOrigin origin = TupleOrigin::Temporal;

  bool operator==(const TemporalTuple&) const = default;
};

struct SpatialSample {
  FrameRef frame;
  BoundingBox crop;
  double iou_value = 0;
  int label = 0;

  bool operator==(const SpatialSample&) const = default;
};

std::optional<int> label_temporal(int delta_t, const SamplerConfig& cfg);
std::optional<int> label_spatial(double iou_value, const SamplerConfig& cfg);

/// One positive (delta = tau_plus) and negatives_per_positive distinct negatives per anchor.
/// Anchors sit at multiples of `anchor_stride`; an anchor is used only when its whole future
/// window up to tau_neg_max lies inside the clip.
std::vector<TemporalTuple> sample_temporal_tuples(const VideoClip& clip, const SamplerConfig& cfg,
                                                  int anchor_stride);

/// Rejection-samples crops around the frame's box until one positive and
/// negatives_per_positive negatives are found or max_crop_attempts draws are spent.
std::vector<SpatialSample> sample_spatial_crops(const Frame& frame, const SamplerConfig& cfg);

/// Text records: `T<TAB>video<TAB>anchor<TAB>candidate<TAB>label` (repetition tuples use `R`)
/// and `S<TAB>video<TAB>frame<TAB>x0,y0,x1,y1<TAB>iou<TAB>label`.
void write_samples(const std::filesystem::path& path, const std::vector<TemporalTuple>& tuples,
                   const std::vector<SpatialSample>& spatial);
void read_samples(const std::filesystem::path& path, std::vector<TemporalTuple>& tuples,
                  std::vector<SpatialSample>& spatial);

}  // namespace poseforge::sampling
