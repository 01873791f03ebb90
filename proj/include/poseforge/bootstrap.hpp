#pragma once

#include <vector>

#include "poseforge/repminer.hpp"
#include "poseforge/trainer.hpp"

namespace poseforge::rep {

struct BootstrapConfig {
  int rounds = 2;
  long retrain_iterations = 1000;
};

/// Eval-mode, L2-normalized embeddings of every frame, one sequence per clip.
std::vector<EmbeddingSequence> embed_clips(const nn::ConvNetParams<float>& params, const nn::ArchConfig& arch,
                                           const std::vector<VideoClip>& clips, int threads);

/// mine_sequence() over every clip, concatenated in clip order.
std::vector<RepetitionGroup> mine_all(const std::vector<EmbeddingSequence>& sequences, const MinerConfig& cfg,
                                      int threads);

/// `pool` without any repetition tuples.
nn::TrainingPool without_repetitions(const nn::TrainingPool& pool);

struct BootstrapResult {
  nn::ModelCheckpoint checkpoint;
  nn::TrainingPool pool;                 // final pool
  std::vector<RepetitionGroup> groups;  // mined in the last round
  std::vector<nn::LossRecord> log;      // all retraining iterations
};

/// Each round embeds all clips with the current model, mines repetitions, replaces the
/// pool's repetition tuples with the newly mined ones (they join the first curriculum
/// block) and continues training for retrain_iterations.
BootstrapResult bootstrap(const nn::FrameStore& frames, const curriculum::CurriculumSchedule* schedule,
                          const nn::TrainingPool& pool, const nn::ModelCheckpoint& initial,
                          const nn::TrainConfig& train_cfg, const MinerConfig& miner_cfg,
                          const sampling::SamplerConfig& sampler_cfg, const BootstrapConfig& cfg, int threads,
                          const std::string& config_echo = {});

}  // namespace poseforge::rep
