#include "poseforge/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "poseforge/io.hpp"

namespace poseforge::pipeline {

namespace fs = std::filesystem;

namespace {

struct Binding {
  std::function<std::string()> get;
  std::function<void(const std::string&, const std::string&)> set;  // (value, where)
};

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

template <typename T>
Binding bind(T& field) {
  Binding b;
  if constexpr (std::is_same_v<T, bool>) {
    b.get = [&field] { return std::string(field ? "true" : "false"); };
    b.set = [&field](const std::string& v, const std::string& w) { field = parse_bool(v, w); };
  } else if constexpr (std::is_same_v<T, int>) {
    b.get = [&field] { return std::to_string(field); };
    b.set = [&field](const std::string& v, const std::string& w) { field = parse_int(v, w); };
  } else if constexpr (std::is_same_v<T, long>) {
    b.get = [&field] { return std::to_string(field); };
    b.set = [&field](const std::string& v, const std::string& w) { field = static_cast<long>(parse_u64(v, w)); };
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    b.get = [&field] { return std::to_string(field); };
    b.set = [&field](const std::string& v, const std::string& w) { field = parse_u64(v, w); };
  } else if constexpr (std::is_same_v<T, double>) {
    b.get = [&field] { return format_double(field); };
    b.set = [&field](const std::string& v, const std::string& w) { field = parse_double(v, w); };
  } else if constexpr (std::is_same_v<T, std::string>) {
    b.get = [&field] { return field; };
    b.set = [&field](const std::string& v, const std::string&) { field = v; };
  } else if constexpr (std::is_same_v<T, fs::path>) {
    b.get = [&field] { return field.string(); };
    b.set = [&field](const std::string& v, const std::string&) { field = v; };
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    b.get = [&field] { return join_doubles(field); };
    b.set = [&field](const std::string& v, const std::string& w) {
      field.clear();
      for (auto part : split(v, ',')) field.push_back(parse_double(part, w));
    };
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    b.get = [&field] { return join_ints(field); };
    b.set = [&field](const std::string& v, const std::string& w) {
      field.clear();
      for (auto part : split(v, ',')) field.push_back(parse_int(part, w));
    };
  } else {
    static_assert(sizeof(T) == 0, "unsupported config field type");
  }
  return b;
}

Binding bind_tasks(nn::TrainConfig& t) {
  Binding b;
  b.get = [&t] { return std::string(t.use_temporal ? "t" : "") + (t.use_spatial ? "s" : ""); };
  b.set = [&t](const std::string& v, const std::string& w) {
    if (v != "t" && v != "s" && v != "ts" && v != "st") throw ConfigError(w + ": expected t, s or st");
    t.use_temporal = v.find('t') != std::string::npos;
    t.use_spatial = v.find('s') != std::string::npos;
  };
  return b;
}

std::map<std::string, Binding> bindings(PipelineConfig& c) {
  return {
      {"seed", bind(c.seed)},
      {"data.manifest", bind(c.manifest)},
      {"data.ground_truth", bind(c.ground_truth)},
      {"synth.n_clips", bind(c.synth.n_clips)},
      {"synth.n_frames", bind(c.synth.n_frames)},
      {"synth.image_size", bind(c.synth.image_size)},
      {"synth.period_min", bind(c.synth.period_min)},
      {"synth.period_max", bind(c.synth.period_max)},
      {"synth.amplitude_min", bind(c.synth.amplitude_min)},
      {"synth.amplitude_max", bind(c.synth.amplitude_max)},
      {"synth.background_motion_max", bind(c.synth.background_motion_max)},
      {"synth.noise_sigma", bind(c.synth.noise_sigma)},
      {"synth.exemplars_per_clip", bind(c.synth.exemplars_per_clip)},
      {"flow.alpha", bind(c.flow.alpha)},
      {"flow.iterations", bind(c.flow.iterations)},
      {"flow.write_fields", bind(c.write_flow_fields)},
      {"curriculum.enabled", bind(c.curriculum_enabled)},
      {"curriculum.fractions", bind(c.curriculum_fractions)},
      {"curriculum.update_interval", bind(c.curriculum_update_interval)},
      {"sampler.tau_plus", bind(c.sampler.tau_plus)},
      {"sampler.tau_neg_min", bind(c.sampler.tau_neg_min)},
      {"sampler.tau_neg_max", bind(c.sampler.tau_neg_max)},
      {"sampler.sigma_pos_min", bind(c.sampler.sigma_pos.min)},
      {"sampler.sigma_pos_max", bind(c.sampler.sigma_pos.max)},
      {"sampler.sigma_neg_min", bind(c.sampler.sigma_neg.min)},
      {"sampler.sigma_neg_max", bind(c.sampler.sigma_neg.max)},
      {"sampler.negatives_per_positive", bind(c.sampler.negatives_per_positive)},
      {"sampler.max_crop_attempts", bind(c.sampler.max_crop_attempts)},
      {"sampler.anchor_stride", bind(c.anchor_stride)},
      {"train.batch_size", bind(c.train.batch_size)},
      {"train.base_lr", bind(c.train.base_lr)},
      {"train.conv_lr", bind(c.train.conv_lr)},
      {"train.spatial_weight", bind(c.train.spatial_loss_weight)},
      {"train.iterations", bind(c.train.total_iterations)},
      {"train.leaky_slope", bind(c.train.leaky_slope)},
      {"train.bn_momentum", bind(c.train.bn_momentum)},
      {"train.bn_epsilon", bind(c.train.bn_epsilon)},
      {"train.adam_beta1", bind(c.train.adam.beta1)},
      {"train.adam_beta2", bind(c.train.adam.beta2)},
      {"train.adam_epsilon", bind(c.train.adam.epsilon)},
      {"train.tasks", bind_tasks(c.train)},
      {"miner.kernel_size", bind(c.miner.kernel_size)},
      {"miner.band", bind(c.miner.band)},
      {"miner.threshold_percentile", bind(c.miner.threshold_percentile)},
      {"miner.min_separation", bind(c.miner.min_separation)},
      {"miner.group_gap", bind(c.miner.group_gap)},
      {"miner.rounds", bind(c.bootstrap.rounds)},
      {"miner.retrain_iterations", bind(c.bootstrap.retrain_iterations)},
      {"retrieval.k", bind(c.retrieval.ks)},
      {"retrieval.nn_rank_cutoff", bind(c.retrieval.nn_rank_cutoff)},
      {"retrieval.rel_margin", bind(c.retrieval.rel_margin)},
      {"retrieval.pcp_fraction", bind(c.retrieval.pcp_fraction)},
      {"retrieval.pckh_fraction", bind(c.retrieval.pckh_fraction)},
      {"eval.query_clip_every", bind(c.split.query_clip_every)},
      {"eval.query_stride", bind(c.split.query_stride)},
      {"eval.test_stride", bind(c.split.test_stride)},
      {"eval.write_svg", bind(c.write_svg)},
      {"ablation.variants", bind(c.ablation_variants)},
  };
}

void sync_seeds(PipelineConfig& cfg) {
  cfg.sampler.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  cfg.train.negatives_per_positive = cfg.sampler.negatives_per_positive;
  cfg.train.use_curriculum = cfg.curriculum_enabled;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void apply_assignment(PipelineConfig& cfg, const std::string& text, const std::string& where) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + text + "'");
  set_value(cfg, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, b] : bindings(copy)) out.emplace_back(key, b.get());
  return out;
}

void set_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  auto table = bindings(cfg);
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second.set(value, "config key " + key);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  sync_seeds(cfg);
}

std::string config_echo(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + "=" + v + "\n";
  return out;
}

void validate(const PipelineConfig& cfg) {
  const auto& s = cfg.synth;
  if (s.n_clips < 1) throw ConfigError("synth.n_clips must be >= 1");
  if (s.period_min > s.period_max) throw ConfigError("synth.period_min exceeds synth.period_max");
  if (!(s.amplitude_min > 0) || s.amplitude_min > s.amplitude_max) {
    throw ConfigError("synth.amplitude_min must be positive and at most synth.amplitude_max");
  }
  if (s.background_motion_max < 0) throw ConfigError("synth.background_motion_max must be >= 0");
  if (s.exemplars_per_clip < 0) throw ConfigError("synth.exemplars_per_clip must be >= 0");
  synth::SynthParams probe;
  probe.n_frames = s.n_frames;
  probe.image_size = s.image_size;
  probe.period = s.period_max;
  probe.amplitude = s.amplitude_max;
  probe.noise_sigma = s.noise_sigma;
  synth::validate(probe);
  probe.period = s.period_min;
  probe.amplitude = s.amplitude_min;
  synth::validate(probe);
  if (!(cfg.flow.alpha > 0)) throw ConfigError("flow.alpha must be positive");
  if (cfg.flow.iterations < 1) throw ConfigError("flow.iterations must be >= 1");
  curriculum::validate_fractions(cfg.curriculum_fractions);
  if (cfg.curriculum_update_interval < 1) throw ConfigError("curriculum.update_interval must be >= 1");
  sampling::validate(cfg.sampler);
  if (cfg.anchor_stride < 1) throw ConfigError("sampler.anchor_stride must be >= 1");
  nn::validate(cfg.train);
  rep::validate(cfg.miner);
  if (cfg.bootstrap.rounds < 0) throw ConfigError("miner.rounds must be >= 0");
  if (cfg.bootstrap.retrain_iterations < 0) throw ConfigError("miner.retrain_iterations must be >= 0");
  eval::validate(cfg.retrieval);
  if (cfg.split.query_clip_every < 2) throw ConfigError("eval.query_clip_every must be >= 2");
  if (cfg.split.query_stride < 1 || cfg.split.test_stride < 1) throw ConfigError("eval strides must be >= 1");
}

PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  PipelineConfig cfg;
  sync_seeds(cfg);
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
      if (body.empty()) continue;
      apply_assignment(cfg, body, path.string() + ":" + std::to_string(line_no));
    }
  }
  for (const auto& o : overrides) apply_assignment(cfg, o, "--set");
  validate(cfg);
  return cfg;
}

int exit_status(const std::exception& e) { return dynamic_cast<const ConfigError*>(&e) ? 2 : 1; }

// ---------------------------------------------------------------------------------------------
// Artifact helpers

namespace {

void say(const RunContext& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << msg << std::endl;
}

fs::path require_input(const fs::path& path, const std::string& what, const std::string& hint) {
  if (!fs::exists(path)) {
    throw ConfigError("missing input: " + what + " (" + path.string() + "); " + hint);
  }
  return path;
}

fs::path manifest_path(const RunContext& ctx) {
  return ctx.cfg.manifest.empty() ? ctx.out / "manifest.tsv" : ctx.cfg.manifest;
}

fs::path ground_truth_path(const RunContext& ctx) {
  return ctx.cfg.ground_truth.empty() ? ctx.out / "ground_truth.tsv" : ctx.cfg.ground_truth;
}

std::string csv_number(double v) { return format_double(v); }

std::vector<std::string> split_list(const std::string& text, char delim) {
  std::vector<std::string> out;
  for (auto part : split(text, delim)) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::string frame_list(const std::vector<FrameRef>& refs) {
  std::string out;
  for (std::size_t i = 0; i < refs.size(); ++i) out += (i ? "," : "") + std::to_string(refs[i].frame_index);
  return out;
}

void write_run_manifest(const RunContext& ctx, const std::string& command, const std::vector<fs::path>& outputs) {
  std::ostringstream m;
  m << "command=" << command << "\nseed=" << ctx.cfg.seed << "\n[config]\n" << config_echo(ctx.cfg) << "[outputs]\n";
  std::vector<std::string> lines;
  for (const auto& p : outputs) lines.push_back(sha256_file(p) + "  " + fs::relative(p, ctx.out).generic_string());
  std::sort(lines.begin(), lines.end(), [](const std::string& a, const std::string& b) {
    return a.substr(66) < b.substr(66);
  });
  for (const auto& l : lines) m << l << "\n";
  write_text_file(ctx.out / ("run_manifest_" + command + ".txt"), m.str());
}

std::vector<synth::SynthParams> clip_params(const PipelineConfig& cfg) {
  const auto& s = cfg.synth;
  std::vector<synth::SynthParams> out;
  for (int i = 0; i < s.n_clips; ++i) {
    Rng rng = make_rng(cfg.seed, "synth-clip", static_cast<std::uint64_t>(i));
    synth::SynthParams p;
    char id[32];
    std::snprintf(id, sizeof(id), "clip%03d", i);
    p.video_id = id;
    p.n_frames = s.n_frames;
    p.image_size = s.image_size;
    p.period = s.period_min + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s.period_max - s.period_min + 1)));
    p.amplitude = s.amplitude_min + (s.amplitude_max - s.amplitude_min) * uniform01(rng);
    p.background_motion = s.background_motion_max * (2.0 * uniform01(rng) - 1.0);
    p.noise_sigma = s.noise_sigma;
    p.seed = cfg.seed;
    out.push_back(p);
  }
  return out;
}

struct PoolInputs {
  nn::TrainingPool pool;
  std::optional<curriculum::CurriculumSchedule> schedule;
};

PoolInputs load_pool(const RunContext& ctx) {
  PoolInputs in;
  if (ctx.cfg.curriculum_enabled) {
    in.schedule = curriculum::read_schedule(
        require_input(ctx.out / "curriculum.tsv", "curriculum schedule",
                      "run 'curriculum' first or set curriculum.enabled=false"),
        ctx.cfg.curriculum_update_interval);
  }
  sampling::read_samples(require_input(ctx.out / "samples.tsv", "training samples", "run 'sample' first"),
                         in.pool.temporal, in.pool.spatial);
  return in;
}

std::function<void(const nn::LossRecord&)> progress(const RunContext& ctx) {
  if (!ctx.log) return {};
  return [&ctx](const nn::LossRecord& r) {
    if (r.iteration % 100 == 0) {
      say(ctx, "iteration " + std::to_string(r.iteration) + " temporal " + format_double(r.temporal) + " spatial " +
                   format_double(r.spatial));
    }
  };
}

nn::ModelCheckpoint latest_checkpoint(const RunContext& ctx) {
  const int round = latest_checkpoint_round(ctx.out);
  if (round < 0) {
    throw ConfigError("missing input: model checkpoint (" + checkpoint_path(ctx.out, 0).string() +
                      "); run 'train' first");
  }
  return nn::load_checkpoint(checkpoint_path(ctx.out, round));
}

struct SplitData {
  std::vector<FrameRef> queries, tests;
  std::vector<eval::PoseVector> query_poses, test_poses;
  eval::Matrix<double> query_emb, test_emb;
};

SplitData make_split(const RunContext& ctx, const Dataset& data, const eval::EmbeddingTable& table) {
  const auto gts = synth::read_ground_truth(
      require_input(ground_truth_path(ctx), "ground-truth poses", "run 'synth' or set data.ground_truth"));
  std::map<std::string, const synth::SynthGroundTruth*> gt_by_id;
  for (const auto& g : gts) gt_by_id[g.video_id] = &g;
  SplitData s;
  for (std::size_t c = 0; c < data.clips.size(); ++c) {
    const auto& clip = data.clips[c];
    const auto it = gt_by_id.find(clip.video_id);
    if (it == gt_by_id.end()) throw Error("no ground-truth poses for " + clip.video_id);
    const bool query_clip = c % static_cast<std::size_t>(ctx.cfg.split.query_clip_every) == 0;
    const int stride = query_clip ? ctx.cfg.split.query_stride : ctx.cfg.split.test_stride;
    for (std::size_t f = 0; f < clip.frames.size(); f += static_cast<std::size_t>(stride)) {
      const int idx = clip.frames[f].frame_index;
      if (idx < 0 || static_cast<std::size_t>(idx) >= it->second->poses.size()) {
        throw Error("no ground-truth pose for " + clip.video_id + ":" + std::to_string(idx));
      }
      const auto pose = eval::normalize_pose(it->second->poses[static_cast<std::size_t>(idx)].joints);
      (query_clip ? s.queries : s.tests).push_back({clip.video_id, idx});
      (query_clip ? s.query_poses : s.test_poses).push_back(pose);
    }
  }
  auto gather = [&](const std::vector<FrameRef>& refs) {
    eval::Matrix<double> m(static_cast<Eigen::Index>(refs.size()), table.vectors.cols());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      m.row(static_cast<Eigen::Index>(i)) = table.vectors.row(table.row(refs[i])).cast<double>();
    }
    return m;
  };
  s.query_emb = gather(s.queries);
  s.test_emb = gather(s.tests);
  return s;
}

double posture_mean(const nn::ModelCheckpoint& ckpt, const RunContext& ctx, const Dataset& data,
                    const std::vector<BenchmarkExemplar>& bench) {
  const auto table = embed_table(ckpt.params, ctx.cfg.train.arch(), data.clips, ctx.threads);
  return eval::posture_auc(table, bench).mean;
}

// ---------------------------------------------------------------------------------------------
// Commands

std::vector<fs::path> cmd_synth(const RunContext& ctx) {
  const auto params = clip_params(ctx.cfg);
  std::vector<VideoClip> clips(params.size());
  std::vector<synth::SynthGroundTruth> gts(params.size());
  parallel_for(params.size(), ctx.threads, [&](std::size_t i) {
    auto [clip, gt] = synth::generate_clip(params[i]);
    clips[i] = std::move(clip);
    gts[i] = std::move(gt);
  });
  DatasetManifest manifest;
  manifest.root = ctx.out;
  std::vector<BenchmarkExemplar> bench;
  std::ostringstream frame_hashes;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const ClipRecord rec = synth::write_clip_frames(clips[i], ctx.out);
    for (const auto& f : rec.frames) {
      frame_hashes << sha256_file(ctx.out / f.relative_path) << "  " << f.relative_path.generic_string() << "\n";
    }
    manifest.clips.push_back(rec);
    const auto b = synth::generate_benchmark(gts[i], ctx.cfg.synth.exemplars_per_clip, ctx.cfg.seed);
    bench.insert(bench.end(), b.begin(), b.end());
  }
  say(ctx, "rendered " + std::to_string(clips.size()) + " clips");
  const fs::path m = ctx.out / "manifest.tsv", g = ctx.out / "ground_truth.tsv", b = ctx.out / "benchmark.tsv",
                 h = ctx.out / "frames.sha256";
  write_manifest(manifest, m);
  synth::write_ground_truth(gts, g);
  write_benchmark(b, bench);
  write_text_file(h, frame_hashes.str());
  return {m, g, b, h};
}

std::vector<fs::path> cmd_flow(const RunContext& ctx) {
  const Dataset data = load_dataset(ctx);
  flow::FlowConfig fc = ctx.cfg.flow;
  fc.threads = ctx.threads;
  std::vector<flow::MotionScore> scores;
  std::vector<fs::path> outputs;
  for (const auto& clip : data.clips) {
    const auto s = flow::score_clip(clip, fc);
    scores.insert(scores.end(), s.begin(), s.end());
    if (ctx.cfg.write_flow_fields) {
      const fs::path dir = ctx.out / "flow" / clip.video_id;
      fs::create_directories(dir);
      std::vector<fs::path> paths(clip.frames.size() > 0 ? clip.frames.size() - 1 : 0);
      parallel_for(paths.size(), ctx.threads, [&](std::size_t i) {
        const auto field = flow::estimate_flow<float>(clip.frames[i].image.cast<float>(),
                                                      clip.frames[i + 1].image.cast<float>(),
                                                      static_cast<float>(fc.alpha), fc.iterations, 1);
        char name[32];
        std::snprintf(name, sizeof(name), "%06d.pflw", clip.frames[i].frame_index);
        paths[i] = dir / name;
        flow::write_flow(paths[i], field);
      });
      outputs.insert(outputs.end(), paths.begin(), paths.end());
    }
  }
  const fs::path p = ctx.out / "scores.tsv";
  flow::write_scores(p, scores);
  outputs.push_back(p);
  return outputs;
}

std::vector<fs::path> cmd_curriculum(const RunContext& ctx) {
  const auto scores =
      flow::read_scores(require_input(ctx.out / "scores.tsv", "motion scores", "run 'flow' first"));
  const auto schedule =
      curriculum::build_curriculum(scores, ctx.cfg.curriculum_fractions, ctx.cfg.curriculum_update_interval);
  const fs::path p = ctx.out / "curriculum.tsv";
  curriculum::write_schedule(p, schedule);
  return {p};
}

std::vector<fs::path> cmd_sample(const RunContext& ctx) {
  const Dataset data = load_dataset(ctx);
  std::vector<sampling::TemporalTuple> tuples;
  std::vector<std::vector<sampling::SpatialSample>> per_clip(data.clips.size());
  for (const auto& clip : data.clips) {
    const auto t = sampling::sample_temporal_tuples(clip, ctx.cfg.sampler, ctx.cfg.anchor_stride);
    tuples.insert(tuples.end(), t.begin(), t.end());
  }
  parallel_for(data.clips.size(), ctx.threads, [&](std::size_t c) {
    for (const auto& f : data.clips[c].frames) {
      const auto s = sampling::sample_spatial_crops(f, ctx.cfg.sampler);
      per_clip[c].insert(per_clip[c].end(), s.begin(), s.end());
    }
  });
  std::vector<sampling::SpatialSample> spatial;
  for (const auto& v : per_clip) spatial.insert(spatial.end(), v.begin(), v.end());
  const fs::path p = ctx.out / "samples.tsv";
  sampling::write_samples(p, tuples, spatial);
  say(ctx, std::to_string(tuples.size()) + " temporal tuples, " + std::to_string(spatial.size()) + " spatial samples");
  return {p};
}

int highest_repetition_round(const fs::path& out) {
  int r = 0;
  while (fs::exists(repetitions_path(out, r + 1))) ++r;
  return r;
}

std::vector<fs::path> cmd_train(const RunContext& ctx) {
  PoolInputs in = load_pool(ctx);
  const Dataset data = load_dataset(ctx);
  const nn::FrameStore frames(data.clips);
  const std::string echo = config_echo(ctx.cfg);
  const int round = highest_repetition_round(ctx.out);

  nn::TrainResult result;
  if (round == 0) {
    result = nn::train(frames, in.schedule ? &*in.schedule : nullptr, in.pool, ctx.cfg.train, nullptr, echo,
                       progress(ctx));
  } else {
    const fs::path prev = require_input(checkpoint_path(ctx.out, round - 1), "model checkpoint of the previous round",
                                        "run 'train' before 'mine-reps'");
    const nn::ModelCheckpoint start = nn::load_checkpoint(prev);
    const auto groups = rep::read_groups(repetitions_path(ctx.out, round));
    const auto tuples = rep::sample_repetition_tuples(groups, ctx.cfg.miner, ctx.cfg.sampler);
    in.pool.temporal.insert(in.pool.temporal.end(), tuples.begin(), tuples.end());
    nn::TrainConfig retrain = ctx.cfg.train;
    retrain.total_iterations = ctx.cfg.bootstrap.retrain_iterations;
    say(ctx, "retraining round " + std::to_string(round) + " with " + std::to_string(tuples.size()) +
                 " repetition tuples");
    result = nn::train(frames, in.schedule ? &*in.schedule : nullptr, in.pool, retrain, &start, echo, progress(ctx));
  }
  const fs::path ck = checkpoint_path(ctx.out, round), log = loss_log_path(ctx.out, round);
  nn::save_checkpoint(result.checkpoint, ck);
  nn::write_loss_log(log, result.log);
  return {ck, log};
}

std::vector<fs::path> cmd_mine(const RunContext& ctx) {
  const int round = latest_checkpoint_round(ctx.out);
  const nn::ModelCheckpoint ckpt = latest_checkpoint(ctx);
  const Dataset data = load_dataset(ctx);
  const auto seqs = rep::embed_clips(ckpt.params, ctx.cfg.train.arch(), data.clips, ctx.threads);
  const auto groups = rep::mine_all(seqs, ctx.cfg.miner, ctx.threads);
  say(ctx, "mined " + std::to_string(groups.size()) + " repetition groups");
  const fs::path p = repetitions_path(ctx.out, round + 1);
  rep::write_groups(p, groups);
  return {p};
}

std::vector<fs::path> cmd_embed(const RunContext& ctx) {
  const nn::ModelCheckpoint ckpt = latest_checkpoint(ctx);
  const Dataset data = load_dataset(ctx);
  const fs::path p = ctx.out / "embeddings.pemb";
  write_embeddings(p, embed_table(ckpt.params, ctx.cfg.train.arch(), data.clips, ctx.threads));
  return {p};
}

std::vector<fs::path> cmd_eval_posture(const RunContext& ctx) {
  const auto bench =
      read_benchmark(require_input(ctx.out / "benchmark.tsv", "posture benchmark", "run 'synth' first"));
  const nn::ModelCheckpoint ckpt = latest_checkpoint(ctx);
  const Dataset data = load_dataset(ctx);
  const auto table = embed_table(ckpt.params, ctx.cfg.train.arch(), data.clips, ctx.threads);
  const auto result = eval::posture_auc(table, bench);
  std::ostringstream csv;
  csv << "exemplar,video_id,frame_index,auc\n";
  for (std::size_t i = 0; i < bench.size(); ++i) {
    csv << i << ',' << bench[i].query.video_id << ',' << bench[i].query.frame_index << ','
        << csv_number(result.per_exemplar[i]) << '\n';
  }
  csv << "mean,,," << csv_number(result.mean) << '\n';
  say(ctx, "average AuC " + format_double(result.mean));
  const fs::path p = ctx.out / "posture_auc.csv";
  write_text_file(p, csv.str());
  return {p};
}

std::vector<fs::path> cmd_eval_retrieval(const RunContext& ctx) {
  const nn::ModelCheckpoint ckpt = latest_checkpoint(ctx);
  const Dataset data = load_dataset(ctx);
  const auto table = embed_table(ckpt.params, ctx.cfg.train.arch(), data.clips, ctx.threads);
  const SplitData s = make_split(ctx, data, table);
  const auto rows =
      eval::retrieval_metrics(s.query_emb, s.query_poses, s.test_emb, s.test_poses, ctx.cfg.retrieval, ctx.threads);
  std::ostringstream csv;
  csv << "k,mean_pose_distance,hitrate_nn,hitrate_rel\n";
  double md = 0, hn = 0, hr = 0;
  for (const auto& r : rows) {
    csv << r.k << ',' << csv_number(r.mean_pose_distance) << ',' << csv_number(r.hitrate_nn) << ','
        << csv_number(r.hitrate_rel) << '\n';
    md += r.mean_pose_distance;
    hn += r.hitrate_nn;
    hr += r.hitrate_rel;
  }
  const auto n = static_cast<double>(rows.size());
  csv << "mean," << csv_number(md / n) << ',' << csv_number(hn / n) << ',' << csv_number(hr / n) << '\n';
  const fs::path p = ctx.out / "retrieval.csv";
  write_text_file(p, csv.str());
  std::vector<fs::path> outputs{p};
  if (ctx.cfg.write_svg) {
    const fs::path svg = ctx.out / "retrieval.svg";
    write_text_file(svg, retrieval_svg(rows));
    outputs.push_back(svg);
  }
  return outputs;
}

std::vector<fs::path> cmd_eval_pose(const RunContext& ctx) {
  const nn::ModelCheckpoint ckpt = latest_checkpoint(ctx);
  const Dataset data = load_dataset(ctx);
  const auto table = embed_table(ckpt.params, ctx.cfg.train.arch(), data.clips, ctx.threads);
  const SplitData s = make_split(ctx, data, table);
  const auto& parts = eval::default_parts();
  std::vector<int> part_eval(parts.size(), 0), part_ok(parts.size(), 0);
  std::array<int, kNumJoints> joint_ok{};
  int skipped = 0;
  for (std::size_t q = 0; q < s.queries.size(); ++q) {
    const auto predicted = eval::nn_pose_transfer(s.query_emb.row(static_cast<Eigen::Index>(q)), s.test_emb,
                                                  s.test_poses);
    const auto p = eval::pcp(predicted, s.query_poses[q], parts, ctx.cfg.retrieval.pcp_fraction);
    skipped += p.skipped;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      part_eval[i] += p.parts[i].evaluated ? 1 : 0;
      part_ok[i] += p.parts[i].correct ? 1 : 0;
    }
    const auto h = eval::pckh(predicted, s.query_poses[q], ctx.cfg.retrieval.pckh_fraction);
    for (int j = 0; j < kNumJoints; ++j) joint_ok[static_cast<std::size_t>(j)] += h.correct[static_cast<std::size_t>(j)] ? 1 : 0;
  }
  std::ostringstream pcp_csv;
  pcp_csv << "part,category,evaluated,correct,pcp\n";
  const int total_eval = std::accumulate(part_eval.begin(), part_eval.end(), 0);
  const int total_ok = std::accumulate(part_ok.begin(), part_ok.end(), 0);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    pcp_csv << parts[i].name << ',' << parts[i].category << ',' << part_eval[i] << ',' << part_ok[i] << ','
            << csv_number(part_eval[i] ? static_cast<double>(part_ok[i]) / part_eval[i] : 0.0) << '\n';
  }
  pcp_csv << "total,," << total_eval << ',' << total_ok << ','
          << csv_number(total_eval ? static_cast<double>(total_ok) / total_eval : 0.0) << '\n';
  if (skipped > 0) say(ctx, std::to_string(skipped) + " zero-length ground-truth parts skipped");

  std::ostringstream pckh_csv;
  pckh_csv << "joint,evaluated,correct,pckh\n";
  const auto nq = static_cast<int>(s.queries.size());
  for (int j = 0; j < kNumJoints; ++j) {
    const int ok = joint_ok[static_cast<std::size_t>(j)];
    pckh_csv << kJointNames[static_cast<std::size_t>(j)] << ',' << nq << ',' << ok << ','
             << csv_number(nq ? static_cast<double>(ok) / nq : 0.0) << '\n';
  }
  const int all_ok = std::accumulate(joint_ok.begin(), joint_ok.end(), 0);
  pckh_csv << "total," << nq * kNumJoints << ',' << all_ok << ','
           << csv_number(nq ? static_cast<double>(all_ok) / (nq * kNumJoints) : 0.0) << '\n';

  const fs::path a = ctx.out / "pcp.csv", b = ctx.out / "pckh.csv";
  write_text_file(a, pcp_csv.str());
  write_text_file(b, pckh_csv.str());
  return {a, b};
}

std::vector<fs::path> cmd_ablation(const RunContext& ctx) {
  const auto variants = parse_variants(ctx.cfg.ablation_variants);
  std::ostringstream csv;
  csv << "variant,status,average_auc\n";
  std::vector<fs::path> outputs;
  if (!variants.empty()) {
    const auto bench =
        read_benchmark(require_input(ctx.out / "benchmark.tsv", "posture benchmark", "run 'synth' first"));
    std::vector<sampling::TemporalTuple> tuples;
    std::vector<sampling::SpatialSample> spatial;
    sampling::read_samples(require_input(ctx.out / "samples.tsv", "training samples", "run 'sample' first"), tuples,
                           spatial);
    const nn::TrainingPool pool{tuples, spatial};
    const Dataset data = load_dataset(ctx);
    const nn::FrameStore frames(data.clips);
    for (const auto& v : variants) {
      std::string status = "ok", auc;
      try {
        RunContext vctx = ctx;
        for (const auto& o : v.overrides) apply_assignment(vctx.cfg, o, "variant " + v.name);
        validate(vctx.cfg);
        std::optional<curriculum::CurriculumSchedule> schedule;
        if (vctx.cfg.curriculum_enabled) {
          schedule = curriculum::read_schedule(
              require_input(ctx.out / "curriculum.tsv", "curriculum schedule", "run 'curriculum' first"),
              vctx.cfg.curriculum_update_interval);
        }
        const auto* sched = schedule ? &*schedule : nullptr;
        say(ctx, "variant " + v.name);
        auto trained = nn::train(frames, sched, pool, vctx.cfg.train, nullptr, config_echo(vctx.cfg), progress(ctx));
        nn::ModelCheckpoint ckpt = std::move(trained.checkpoint);
        if (vctx.cfg.bootstrap.rounds > 0) {
          ckpt = rep::bootstrap(frames, sched, pool, ckpt, vctx.cfg.train, vctx.cfg.miner, vctx.cfg.sampler,
                                vctx.cfg.bootstrap, ctx.threads, config_echo(vctx.cfg))
                     .checkpoint;
        }
        auc = csv_number(posture_mean(ckpt, vctx, data, bench));
      } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        status = "failed: " + msg;
        say(ctx, "variant " + v.name + " " + status);
      }
      csv << v.name << ',' << status << ',' << auc << '\n';
    }
  }
  const fs::path p = ctx.out / "ablation.csv";
  write_text_file(p, csv.str());
  outputs.push_back(p);
  return outputs;
}

}  // namespace

std::vector<fs::path> run(const std::string& command, const RunContext& ctx) {
  static const std::map<std::string, std::function<std::vector<fs::path>(const RunContext&)>> commands = {
      {"synth", cmd_synth},
      {"flow", cmd_flow},
      {"curriculum", cmd_curriculum},
      {"sample", cmd_sample},
      {"train", cmd_train},
      {"mine-reps", cmd_mine},
      {"embed", cmd_embed},
      {"eval-posture", cmd_eval_posture},
      {"eval-retrieval", cmd_eval_retrieval},
      {"eval-pose", cmd_eval_pose},
      {"ablation", cmd_ablation},
  };
  const auto it = commands.find(command);
  if (it == commands.end()) throw ConfigError("unknown command '" + command + "'");
  fs::create_directories(ctx.out);
  auto outputs = it->second(ctx);
  write_run_manifest(ctx, command, outputs);
  return outputs;
}

Dataset load_dataset(const RunContext& ctx) {
  Dataset d;
  d.manifest = load_manifest(require_input(manifest_path(ctx), "dataset manifest", "run 'synth' or set data.manifest"));
  d.clips.resize(d.manifest.clips.size());
  parallel_for(d.clips.size(), ctx.threads,
               [&](std::size_t i) { d.clips[i] = load_clip(d.manifest, d.manifest.clips[i]); });
  return d;
}

eval::EmbeddingTable embed_table(const nn::ConvNetParams<float>& params, const nn::ArchConfig& arch,
                                 const std::vector<VideoClip>& clips, int threads) {
  std::vector<const Frame*> frames;
  eval::EmbeddingTable table;
  for (const auto& clip : clips) {
    for (const auto& f : clip.frames) {
      table.rows.emplace(f.ref(), static_cast<Eigen::Index>(frames.size()));
      frames.push_back(&f);
    }
  }
  table.vectors = nn::embed_frames(params, arch, frames, threads);
  return table;
}

void write_benchmark(const fs::path& path, const std::vector<BenchmarkExemplar>& exemplars) {
  std::ostringstream out;
  for (const auto& ex : exemplars) {
    out << ex.query.video_id << '\t' << ex.query.frame_index << '\t' << frame_list(ex.positives) << '\t'
        << frame_list(ex.negatives) << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<BenchmarkExemplar> read_benchmark(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("benchmark not found: " + path.string());
  std::vector<BenchmarkExemplar> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = split(line, '\t');
    if (f.size() != 4) throw Error("malformed benchmark record at " + where);
    BenchmarkExemplar ex;
    const std::string vid(f[0]);
    ex.query = {vid, parse_int(f[1], where)};
    for (auto p : split(f[2], ',')) ex.positives.push_back({vid, parse_int(p, where)});
    for (auto n : split(f[3], ',')) ex.negatives.push_back({vid, parse_int(n, where)});
    out.push_back(std::move(ex));
  }
  return out;
}

void write_embeddings(const fs::path& path, const eval::EmbeddingTable& table) {
  std::ostringstream out(std::ios::binary);
  out.write("PEMB", 4);
  write_u32(out, static_cast<std::uint32_t>(table.rows.size()));
  write_u32(out, static_cast<std::uint32_t>(table.vectors.cols()));
  for (const auto& [ref, row] : table.rows) {
    write_u32(out, static_cast<std::uint32_t>(ref.video_id.size()));
    out.write(ref.video_id.data(), static_cast<std::streamsize>(ref.video_id.size()));
    write_u32(out, static_cast<std::uint32_t>(ref.frame_index));
    for (Eigen::Index c = 0; c < table.vectors.cols(); ++c) write_f32(out, table.vectors(row, c));
  }
  write_text_file(path, out.str());
}

eval::EmbeddingTable read_embeddings(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("embeddings not found: " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (std::string(magic, 4) != "PEMB") throw Error(path.string() + ": not a PEMB embedding file");
  const auto count = read_u32(in);
  const auto dim = read_u32(in);
  eval::EmbeddingTable table;
  table.vectors.resize(count, dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id(read_u32(in), '\0');
    in.read(id.data(), static_cast<std::streamsize>(id.size()));
    if (!in) throw Error(path.string() + ": truncated PEMB file");
    const auto frame = static_cast<int>(read_u32(in));
    for (std::uint32_t c = 0; c < dim; ++c) table.vectors(i, c) = read_f32(in);
    table.rows.emplace(FrameRef{id, frame}, static_cast<Eigen::Index>(i));
  }
  return table;
}

fs::path checkpoint_path(const fs::path& out, int round) {
  return out / (round == 0 ? std::string("checkpoint.pfck") : "checkpoint_r" + std::to_string(round) + ".pfck");
}

fs::path repetitions_path(const fs::path& out, int round) {
  return out / ("repetitions_r" + std::to_string(round) + ".tsv");
}

fs::path loss_log_path(const fs::path& out, int round) {
  return out / (round == 0 ? std::string("loss_log.tsv") : "loss_log_r" + std::to_string(round) + ".tsv");
}

int latest_checkpoint_round(const fs::path& out) {
  if (!fs::exists(checkpoint_path(out, 0))) return -1;
  int r = 0;
  while (fs::exists(checkpoint_path(out, r + 1))) ++r;
  return r;
}

std::vector<AblationVariant> parse_variants(const std::string& spec) {
  static const std::map<std::string, std::vector<std::string>> builtin = {
      {"T", {"train.tasks=t", "miner.rounds=0"}},
      {"S", {"train.tasks=s", "miner.rounds=0"}},
      {"ST", {"train.tasks=st", "miner.rounds=0"}},
      {"ST+reps", {"train.tasks=st"}},
      {"curriculum", {"curriculum.enabled=true", "miner.rounds=0"}},
      {"shuffled", {"curriculum.enabled=false", "miner.rounds=0"}},
  };
  std::vector<AblationVariant> out;
  for (const auto& entry : split_list(spec, ';')) {
    const auto colon = entry.find(':');
    AblationVariant v;
    v.name = trim(entry.substr(0, colon));
    if (v.name.empty()) throw ConfigError("ablation variant without a name: '" + entry + "'");
    if (colon == std::string::npos) {
      const auto it = builtin.find(v.name);
      if (it == builtin.end()) throw ConfigError("unknown ablation variant '" + v.name + "'");
      v.overrides = it->second;
    } else {
      v.overrides = split_list(entry.substr(colon + 1), ',');
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::string retrieval_svg(const std::vector<eval::RetrievalAtK>& rows) {
  constexpr double kW = 480, kH = 320, kPad = 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n";
  if (!rows.empty()) {
    const double k_max = rows.back().k;
    auto x = [&](double k) { return kPad + (kW - 2 * kPad) * (k_max > 1 ? (k - 1) / (k_max - 1) : 0.5); };
    auto y = [&](double v) { return kH - kPad - (kH - 2 * kPad) * v; };
    auto line = [&](auto value, const char* color, const char* label, double ly) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
      for (const auto& r : rows) svg << x(r.k) << ',' << y(value(r)) << ' ';
      svg << "\"/>\n<text x=\"" << kW - kPad - 120 << "\" y=\"" << ly << "\" fill=\"" << color
          << "\" font-size=\"12\">" << label << "</text>\n";
    };
    line([](const eval::RetrievalAtK& r) { return r.hitrate_nn; }, "steelblue", "hit rate (NN)", kPad);
    line([](const eval::RetrievalAtK& r) { return r.hitrate_rel; }, "darkorange", "hit rate (relative)", kPad + 16);
    for (const auto& r : rows) {
      svg << "<text x=\"" << x(r.k) << "\" y=\"" << kH - kPad + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
          << r.k << "</text>\n";
    }
  }
  svg << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 6 << "\" font-size=\"12\" text-anchor=\"middle\">K</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace poseforge::pipeline
