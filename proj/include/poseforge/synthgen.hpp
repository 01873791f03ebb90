#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "poseforge/dataset.hpp"

namespace poseforge::synth {

struct SynthParams {
  std::string video_id = "clip000";
  int n_frames = 200;
  int image_size = 96;
  int period = 20;                 // frames per motion cycle
  double amplitude = 14.0;         // peak limb-tip displacement in pixels
  double background_motion = 0.0;  // horizontal texture translation, pixels per frame
  double noise_sigma = 2.0;        // gray levels
  std::uint64_t seed = 1;
};

struct SynthGroundTruth {
  std::string video_id;
  std::vector<PoseAnnotation> poses;
  std::vector<BoundingBox> boxes;
  int period = 0;
  std::vector<double> phase;  // (t mod period) / period
};

/// Throws ConfigError naming the offending field.
void validate(const SynthParams& params);

/// Renders a 14-joint stick figure with sinusoidal limb angles over a translating
/// sinusoid-sum texture. Boxes are the tight pixel bounds of the figure's coverage.
std::pair<VideoClip, SynthGroundTruth> generate_clip(const SynthParams& params);

/// Ground-truth pose of a clip rendered with `params` at `frame`; no rendering.
Joints pose_at(const SynthParams& params, int frame);

/// Draws exemplars whose positives are within 0.05 cyclic phase of the query and whose
/// negatives are within 0.05 of the opposite phase, without replacement.
std::vector<BenchmarkExemplar> generate_benchmark(const SynthGroundTruth& gt, int n_exemplars,
                                                  std::uint64_t rng_seed);

/// Cyclic phase difference in [0, 0.5].
double cyclic_phase_distance(double a, double b);

/// Sidecar: `video_id<TAB>frame_index<TAB>phase<TAB>x,y<TAB>...` with 14 joint pairs.
void write_ground_truth(const std::vector<SynthGroundTruth>& gts, const std::filesystem::path& path);
std::vector<SynthGroundTruth> read_ground_truth(const std::filesystem::path& path);

/// Writes frames as PGM files below `root` and returns the manifest records for the clip.
ClipRecord write_clip_frames(const VideoClip& clip, const std::filesystem::path& root);

}  // namespace poseforge::synth
