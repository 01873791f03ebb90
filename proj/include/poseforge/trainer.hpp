#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "poseforge/checkpoint.hpp"
#include "poseforge/curriculum.hpp"
#include "poseforge/sampling.hpp"

namespace poseforge::nn {

struct TrainConfig {
  int batch_size = 48;
  double base_lr = 1e-4;
  double conv_lr = 1e-5;
  double spatial_loss_weight = 0.1;
  long total_iterations = 2000;
  double leaky_slope = 0.1;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  AdamConfig adam;
  int negatives_per_positive = 3;
  bool use_curriculum = true;  // false: every sample is active from the first iteration
  bool use_temporal = true;
  bool use_spatial = true;
  std::uint64_t seed = 0;

  int positives_per_batch() const { return batch_size / (1 + negatives_per_positive); }
  int negatives_per_batch() const { return batch_size - positives_per_batch(); }
  ArchConfig arch() const { return {leaky_slope, bn_epsilon}; }
  LearningRates rates() const { return {base_lr, conv_lr}; }
};

/// Throws ConfigError for non-positive sizes/rates or a batch that does not split 1:negatives.
void validate(const TrainConfig& cfg);

struct TrainingPool {
  std::vector<sampling::TemporalTuple> temporal;  // includes repetition tuples
  std::vector<sampling::SpatialSample> spatial;
};

struct LossRecord {
  long iteration = 0;
  double temporal = 0;
  double spatial = 0;
  double total = 0;

  bool operator==(const LossRecord&) const = default;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<LossRecord> log;
};

/// Resolves frames of loaded clips by FrameRef.
class FrameStore {
 public:
  explicit FrameStore(const std::vector<VideoClip>& clips);
  const Frame& at(const FrameRef& ref) const;
  const Frame& at(const std::string& video_id, int frame_index) const;
  const std::vector<VideoClip>& clips() const { return *clips_; }

 private:
  const std::vector<VideoClip>* clips_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// 64x64 network input in [0,1] for `box` of `frame`, as one row.
Mat<float> network_input(const Frame& frame, const BoundingBox& box);

/// Curriculum block of every pool entry: temporal tuples take the block of their anchor
/// frame, repetition tuples always join block 0, spatial samples take their frame's block.
/// Entries whose frame is not in the schedule join the last block.
struct PoolBlocks {
  std::vector<int> temporal;
  std::vector<int> spatial;
};
PoolBlocks assign_blocks(const TrainingPool& pool, const curriculum::CurriculumSchedule& schedule);

/// Joint training loop. Each iteration draws positives_per_batch positive and
/// negatives_per_batch negative entries (uniformly, with replacement) for each enabled task
/// from the entries active at that iteration, takes one Adam step and updates the
/// batch-norm running statistics. Starts from `resume` when given (iterations continue from
/// its counter); otherwise from init_params(seed). `schedule` may be null only when the
/// curriculum is disabled.
TrainResult train(const FrameStore& frames, const curriculum::CurriculumSchedule* schedule,
                  const TrainingPool& pool, const TrainConfig& cfg, const ModelCheckpoint* resume = nullptr,
                  const std::string& config_echo = {},
                  const std::function<void(const LossRecord&)>& on_iteration = {});

/// `iteration<TAB>l_temporal<TAB>l_spatial<TAB>total`
void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);
std::vector<LossRecord> read_loss_log(const std::filesystem::path& path);

/// L2-normalized embeddings of every frame's box crop, in eval mode. Frames are processed in
/// fixed-size chunks, so the output does not depend on `threads`.
Mat<float> embed_frames(const ConvNetParams<float>& params, const ArchConfig& arch,
                        const std::vector<const Frame*>& frames, int threads);

}  // namespace poseforge::nn
