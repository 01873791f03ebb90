#include "poseforge/bootstrap.hpp"

namespace poseforge::rep {

std::vector<EmbeddingSequence> embed_clips(const nn::ConvNetParams<float>& params, const nn::ArchConfig& arch,
                                           const std::vector<VideoClip>& clips, int threads) {
  std::vector<EmbeddingSequence> out;
  for (const auto& clip : clips) {
    std::vector<const Frame*> frames;
    EmbeddingSequence seq{clip.video_id, {}, {}, true};
    for (const auto& f : clip.frames) {
      frames.push_back(&f);
      seq.frame_indices.push_back(f.frame_index);
    }
    seq.vectors = nn::embed_frames(params, arch, frames, threads);
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<RepetitionGroup> mine_all(const std::vector<EmbeddingSequence>& sequences, const MinerConfig& cfg,
                                      int threads) {
  std::vector<RepetitionGroup> out;
  for (const auto& seq : sequences) {
    auto groups = mine_sequence(seq, cfg, threads);
    out.insert(out.end(), groups.begin(), groups.end());
  }
  return out;
}

nn::TrainingPool without_repetitions(const nn::TrainingPool& pool) {
  nn::TrainingPool out;
  out.spatial = pool.spatial;
  for (const auto& t : pool.temporal) {
    if (t.origin != sampling::TupleOrigin::Repetition) out.temporal.push_back(t);
  }
  return out;
}

BootstrapResult bootstrap(const nn::FrameStore& frames, const curriculum::CurriculumSchedule* schedule,
                          const nn::TrainingPool& pool, const nn::ModelCheckpoint& initial,
                          const nn::TrainConfig& train_cfg, const MinerConfig& miner_cfg,
                          const sampling::SamplerConfig& sampler_cfg, const BootstrapConfig& cfg, int threads,
                          const std::string& config_echo) {
  if (cfg.rounds < 0) throw ConfigError("bootstrap.rounds must be >= 0");
  if (cfg.retrain_iterations < 0) throw ConfigError("bootstrap.retrain_iterations must be >= 0");
  validate(miner_cfg);
  BootstrapResult result{initial, pool, {}, {}};
  nn::TrainConfig retrain = train_cfg;
  retrain.total_iterations = cfg.retrain_iterations;
  for (int round = 0; round < cfg.rounds; ++round) {
    const auto sequences = embed_clips(result.checkpoint.params, train_cfg.arch(), frames.clips(), threads);
    result.groups = mine_all(sequences, miner_cfg, threads);
    result.pool = without_repetitions(pool);
    const auto tuples = sample_repetition_tuples(result.groups, miner_cfg, sampler_cfg);
    result.pool.temporal.insert(result.pool.temporal.end(), tuples.begin(), tuples.end());
    auto trained = nn::train(frames, schedule, result.pool, retrain, &result.checkpoint, config_echo);
    result.checkpoint = std::move(trained.checkpoint);
    result.log.insert(result.log.end(), trained.log.begin(), trained.log.end());
  }
  return result;
}

}  // namespace poseforge::rep
