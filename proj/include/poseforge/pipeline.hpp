#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "poseforge/bootstrap.hpp"
#include "poseforge/evalharness.hpp"
#include "poseforge/flow.hpp"
#include "poseforge/synthgen.hpp"

namespace poseforge::pipeline {

/// Synthetic dataset: clip i draws its period, amplitude and background speed uniformly from
/// the given ranges.
struct SynthSetConfig {
  int n_clips = 40;
  int n_frames = 200;
  int image_size = 96;
  int period_min = 21;
  int period_max = 29;
  double amplitude_min = 4.0;
  double amplitude_max = 8.0;
  double background_motion_max = 3.0;  // |pixels per frame|
  double noise_sigma = 20.0;
  int exemplars_per_clip = 5;
};

struct EvalSplitConfig {
  int query_clip_every = 5;  // clips with index % every == 0 hold the queries
  int query_stride = 10;
  int test_stride = 2;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::filesystem::path manifest;      // empty: <out>/manifest.tsv
  std::filesystem::path ground_truth;  // empty: <out>/ground_truth.tsv
  SynthSetConfig synth;
  flow::FlowConfig flow;
  bool write_flow_fields = false;
  bool curriculum_enabled = true;
  std::vector<double> curriculum_fractions = curriculum::kDefaultFractions;
  int curriculum_update_interval = 250;
  sampling::SamplerConfig sampler;
  int anchor_stride = 1;
  nn::TrainConfig train;
  rep::MinerConfig miner;
  rep::BootstrapConfig bootstrap;
  eval::RetrievalConfig retrieval;
  EvalSplitConfig split;
  bool write_svg = true;
  std::string ablation_variants = "T;S;ST;ST+reps";
};

/// Every key in sorted order with its current value.
std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg);

/// Sets one dotted key. Throws ConfigError for unknown keys or unparsable values.
void set_value(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// `key=value` per line in sorted key order.
std::string config_echo(const PipelineConfig& cfg);

/// Parses `key = value` lines ('#' starts a comment), then applies `overrides` (`key=value`)
/// in order. An empty path means defaults only. Validates the result.
PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Throws ConfigError when any module configuration is invalid.
void validate(const PipelineConfig& cfg);

inline const std::vector<std::string> kCommands = {"synth",   "flow",         "curriculum",     "sample",
                                                    "train",   "mine-reps",    "embed",          "eval-posture",
                                                    "eval-retrieval", "eval-pose", "ablation"};

struct RunContext {
  PipelineConfig cfg;
  std::filesystem::path out;
  int threads = 1;
  std::ostream* log = nullptr;  // progress messages; may be null
};

/// Runs one command, writing its artifacts and `run_manifest_<command>.txt` (config echo,
/// seed and SHA-256 of every output) below ctx.out. Returns the output paths.
std::vector<std::filesystem::path> run(const std::string& command, const RunContext& ctx);

/// Maps an exception to the process exit status: 2 for ConfigError, 1 otherwise.
int exit_status(const std::exception& e);

// Artifacts shared by the stages.

struct Dataset {
  DatasetManifest manifest;
  std::vector<VideoClip> clips;
};
Dataset load_dataset(const RunContext& ctx);

/// Embeddings of every frame of `clips`, keyed by frame.
eval::EmbeddingTable embed_table(const nn::ConvNetParams<float>& params, const nn::ArchConfig& arch,
                                 const std::vector<VideoClip>& clips, int threads);

/// `video_id<TAB>query<TAB>p1,p2,...<TAB>n1,n2,...` (frame indices).
void write_benchmark(const std::filesystem::path& path, const std::vector<BenchmarkExemplar>& exemplars);
std::vector<BenchmarkExemplar> read_benchmark(const std::filesystem::path& path);

/// Binary embeddings: "PEMB", u32 count, u32 dim, then per frame u32 id length, id bytes,
/// u32 frame_index and dim f32 values.
void write_embeddings(const std::filesystem::path& path, const eval::EmbeddingTable& table);
eval::EmbeddingTable read_embeddings(const std::filesystem::path& path);

/// Latest bootstrap round with a checkpoint (0 = initial training), or -1 when none exists.
int latest_checkpoint_round(const std::filesystem::path& out);
std::filesystem::path checkpoint_path(const std::filesystem::path& out, int round);
std::filesystem::path repetitions_path(const std::filesystem::path& out, int round);
std::filesystem::path loss_log_path(const std::filesystem::path& out, int round);

struct AblationVariant {
  std::string name;
  std::vector<std::string> overrides;  // key=value
};

/// `name` (T, S, ST, ST+reps, shuffled) or `name:key=value,key=value`, separated by ';'.
std::vector<AblationVariant> parse_variants(const std::string& spec);

/// Simple line plot of the retrieval metrics against K.
std::string retrieval_svg(const std::vector<eval::RetrievalAtK>& rows);

}  // namespace poseforge::pipeline
