#include "poseforge/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "poseforge/io.hpp"

namespace poseforge::nn {

void validate(const TrainConfig& cfg) {
  if (cfg.negatives_per_positive < 1) throw ConfigError("train: negatives_per_positive must be >= 1");
  if (cfg.batch_size < 1 + cfg.negatives_per_positive || cfg.batch_size % (1 + cfg.negatives_per_positive) != 0) {
    throw ConfigError("train.batch_size must be a positive multiple of 1 + negatives_per_positive");
  }
  if (!(cfg.base_lr > 0) || !(cfg.conv_lr >= 0)) throw ConfigError("train: learning rates must be positive");
  if (cfg.total_iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (!(cfg.spatial_loss_weight >= 0)) throw ConfigError("train.spatial_weight must be >= 0");
  if (!(cfg.bn_momentum >= 0 && cfg.bn_momentum < 1)) throw ConfigError("train.bn_momentum must be in [0, 1)");
  if (!(cfg.bn_epsilon > 0)) throw ConfigError("train.bn_epsilon must be positive");
  if (!cfg.use_temporal && !cfg.use_spatial) throw ConfigError("train: at least one task must be enabled");
}

FrameStore::FrameStore(const std::vector<VideoClip>& clips) : clips_(&clips) {
  for (std::size_t i = 0; i < clips.size(); ++i) by_id_.emplace(clips[i].video_id, i);
}

const Frame& FrameStore::at(const std::string& video_id, int frame_index) const {
  const auto it = by_id_.find(video_id);
  const int pos = it == by_id_.end() ? -1 : (*clips_)[it->second].position_of(frame_index);
  if (pos < 0) throw Error("unknown frame " + video_id + ":" + std::to_string(frame_index));
  return (*clips_)[it->second].frames[static_cast<std::size_t>(pos)];
}

const Frame& FrameStore::at(const FrameRef& ref) const { return at(ref.video_id, ref.frame_index); }

Mat<float> network_input(const Frame& frame, const BoundingBox& box) {
  const ImageF crop = crop_resize(frame, box, kInputSize);
  return Eigen::Map<const Mat<float>>(crop.data(), 1, kInputPixels) / 255.0f;
}

PoolBlocks assign_blocks(const TrainingPool& pool, const curriculum::CurriculumSchedule& schedule) {
  const auto index = schedule.block_index();
  const int last = static_cast<int>(schedule.blocks.size()) - 1;
  auto lookup = [&](const FrameRef& ref) {
    const auto it = index.find(ref);
    return it == index.end() ? last : it->second;
  };
  PoolBlocks out;
  for (const auto& t : pool.temporal) {
    out.temporal.push_back(t.origin == sampling::TupleOrigin::Repetition ? 0 : lookup({t.video_id, t.anchor}));
  }
  for (const auto& s : pool.spatial) out.spatial.push_back(lookup(s.frame));
  return out;
}

namespace {

// Entries of one class ordered by block, with cumulative counts so that the entries active
// under block limit L are the prefix [0, ends[L]).
struct ClassPool {
  std::vector<std::size_t> entries;
  std::vector<std::size_t> ends;

  std::size_t active(int limit) const { return ends[static_cast<std::size_t>(limit)]; }
};

ClassPool make_class_pool(const std::vector<int>& labels, const std::vector<int>& blocks, int n_blocks,
                          int label) {
  ClassPool out;
  out.ends.assign(static_cast<std::size_t>(n_blocks), 0);
  for (int b = 0; b < n_blocks; ++b) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label && blocks[i] == b) out.entries.push_back(i);
    }
    out.ends[static_cast<std::size_t>(b)] = out.entries.size();
  }
  return out;
}

std::vector<std::size_t> draw(const ClassPool& pool, int limit, int count, Rng& rng) {
  const std::size_t n = pool.active(limit);
  std::vector<std::size_t> out;
  for (int k = 0; k < count; ++k) out.push_back(pool.entries[uniform_index(rng, n)]);
  return out;
}

}  // namespace

TrainResult train(const FrameStore& frames, const curriculum::CurriculumSchedule* schedule,
                  const TrainingPool& pool, const TrainConfig& cfg, const ModelCheckpoint* resume,
                  const std::string& config_echo, const std::function<void(const LossRecord&)>& on_iteration) {
  validate(cfg);
  if (cfg.use_curriculum && (!schedule || schedule->blocks.empty())) {
    throw ConfigError("train: curriculum mode needs a curriculum schedule");
  }

  std::vector<int> t_labels, s_labels, t_blocks, s_blocks;
  for (const auto& t : pool.temporal) t_labels.push_back(t.label);
  for (const auto& s : pool.spatial) s_labels.push_back(s.label);
  int n_blocks = 1;
  if (cfg.use_curriculum) {
    const PoolBlocks blocks = assign_blocks(pool, *schedule);
    t_blocks = blocks.temporal;
    s_blocks = blocks.spatial;
    n_blocks = static_cast<int>(schedule->blocks.size());
  } else {
    t_blocks.assign(pool.temporal.size(), 0);
    s_blocks.assign(pool.spatial.size(), 0);
  }
  const ClassPool t_pos = make_class_pool(t_labels, t_blocks, n_blocks, 1);
  const ClassPool t_neg = make_class_pool(t_labels, t_blocks, n_blocks, 0);
  const ClassPool s_pos = make_class_pool(s_labels, s_blocks, n_blocks, 1);
  const ClassPool s_neg = make_class_pool(s_labels, s_blocks, n_blocks, 0);

  TrainResult result;
  ModelCheckpoint& ckpt = result.checkpoint;
  if (resume) {
    ckpt = *resume;
  } else {
    ckpt.params = init_params<float>(cfg.seed);
    ckpt.adam = AdamState<float>::fresh();
  }
  ckpt.config_echo = config_echo;

  const ArchConfig arch = cfg.arch();
  const int n_pos = cfg.positives_per_batch();
  const int n_neg = cfg.negatives_per_batch();
  const long first = static_cast<long>(ckpt.iteration);
  for (long it = first; it < first + cfg.total_iterations; ++it) {
    const int limit = cfg.use_curriculum ? curriculum::active_block_limit(*schedule, it) : 0;
    Rng rng = make_rng(cfg.seed, "batch", static_cast<std::uint64_t>(it));
    JointBatch<float> batch;

    if (cfg.use_temporal) {
      if (t_pos.active(limit) == 0 || t_neg.active(limit) == 0) {
        throw Error("train: no active temporal positives/negatives at iteration " + std::to_string(it));
      }
      auto picks = draw(t_pos, limit, n_pos, rng);
      const auto negs = draw(t_neg, limit, n_neg, rng);
      picks.insert(picks.end(), negs.begin(), negs.end());
      const auto n = static_cast<Eigen::Index>(picks.size());
      batch.anchors.resize(n, kInputPixels);
      batch.candidates.resize(n, kInputPixels);
      batch.temporal_labels.resize(n);
      for (Eigen::Index r = 0; r < n; ++r) {
        const auto& t = pool.temporal[picks[static_cast<std::size_t>(r)]];
        const Frame& a = frames.at(t.video_id, t.anchor);
        const Frame& c = frames.at(t.video_id, t.candidate);
        batch.anchors.row(r) = network_input(a, a.box);
        batch.candidates.row(r) = network_input(c, c.box);
        batch.temporal_labels[r] = static_cast<float>(t.label);
      }
    }
    if (cfg.use_spatial) {
      if (s_pos.active(limit) == 0 || s_neg.active(limit) == 0) {
        throw Error("train: no active spatial positives/negatives at iteration " + std::to_string(it));
      }
      auto picks = draw(s_pos, limit, n_pos, rng);
      const auto negs = draw(s_neg, limit, n_neg, rng);
      picks.insert(picks.end(), negs.begin(), negs.end());
      const auto n = static_cast<Eigen::Index>(picks.size());
      batch.spatial.resize(n, kInputPixels);
      batch.spatial_labels.resize(n);
      for (Eigen::Index r = 0; r < n; ++r) {
        const auto& s = pool.spatial[picks[static_cast<std::size_t>(r)]];
        batch.spatial.row(r) = network_input(frames.at(s.frame), s.crop);
        batch.spatial_labels[r] = static_cast<float>(s.label);
      }
    }

    const float weight = cfg.use_temporal ? static_cast<float>(cfg.spatial_loss_weight) : 1.0f;
    StepOutput<float> step = forward_backward<float>(ckpt.params, batch, weight, arch);
    if (!std::isfinite(step.total) || !std::isfinite(step.loss_temporal) || !std::isfinite(step.loss_spatial)) {
      throw Error("train: non-finite loss at iteration " + std::to_string(it));
    }
    adam_step(ckpt.params, step.grads, ckpt.adam, cfg.rates(), cfg.adam);
    if (cfg.use_temporal) update_running_stats(ckpt.params, step.temporal_cache, true, cfg.bn_momentum);
    if (cfg.use_spatial) update_running_stats(ckpt.params, step.spatial_cache, false, cfg.bn_momentum);
    ckpt.iteration = static_cast<std::uint64_t>(it + 1);

    const LossRecord rec{it, step.loss_temporal, step.loss_spatial, step.total};
    result.log.push_back(rec);
    if (on_iteration) on_iteration(rec);
  }
  return result;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::ostringstream out;
  for (const auto& r : log) {
    out << r.iteration << '\t' << format_double(r.temporal) << '\t' << format_double(r.spatial) << '\t'
        << format_double(r.total) << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<LossRecord> read_loss_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("loss log not found: " + path.string());
  std::vector<LossRecord> log;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = split(line, '\t');
    if (f.size() != 4) throw Error("malformed loss record at " + where);
    log.push_back({parse_int(f[0], where), parse_double(f[1], where), parse_double(f[2], where),
                   parse_double(f[3], where)});
  }
  return log;
}

Mat<float> embed_frames(const ConvNetParams<float>& params, const ArchConfig& arch,
                        const std::vector<const Frame*>& frames, int threads) {
  constexpr std::size_t kChunk = 32;
  const std::size_t n = frames.size();
  Mat<float> out(static_cast<Eigen::Index>(n), kEmbedDim);
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(n, begin + kChunk);
    // Every chunk has the same row count so the GEMM blocking, and thus rounding, is fixed.
    Mat<float> images = Mat<float>::Zero(static_cast<Eigen::Index>(kChunk), kInputPixels);
    for (std::size_t i = begin; i < end; ++i) {
      images.row(static_cast<Eigen::Index>(i - begin)) = network_input(*frames[i], frames[i]->box);
    }
    Mat<float> emb = embed_batch<float>(params, images, arch, nullptr);
    for (std::size_t i = begin; i < end; ++i) {
      auto row = emb.row(static_cast<Eigen::Index>(i - begin));
      const float norm = row.norm();
      if (norm > 0) row /= norm;
      out.row(static_cast<Eigen::Index>(i)) = row;
    }
  });
  return out;
}

}  // namespace poseforge::nn
