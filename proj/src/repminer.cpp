#include "poseforge/repminer.hpp"

#include <algorithm>
#include <fstream>

#include "poseforge/io.hpp"

namespace poseforge::rep {

void validate(const MinerConfig& cfg) {
  if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0) throw ConfigError("miner: kernel_size must be odd");
  if (cfg.band < 1) throw ConfigError("miner: band must be >= 1");
  if (!(cfg.threshold_percentile > 0 && cfg.threshold_percentile < 50)) {
    throw ConfigError("miner: threshold_percentile must be in (0, 50)");
  }
  if (cfg.min_separation < 1) throw ConfigError("miner: min_separation must be >= 1");
  if (cfg.group_gap < 0) throw ConfigError("miner: group_gap must be >= 0");
}

Matrix<float> self_similarity(const EmbeddingSequence& emb, int threads) {
  if (!emb.normalized) throw Error("self_similarity: embeddings of " + emb.video_id + " are not normalized");
  const Eigen::Index n = emb.vectors.rows();
  if (n < 2) throw Error("self_similarity: need at least two frames");
  Matrix<float> d = Matrix<float>::Zero(n, n);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t row) {
    const auto i = static_cast<Eigen::Index>(row);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = (emb.vectors.row(i) - emb.vectors.row(j)).norm();
    }
  });
  d.triangularView<Eigen::StrictlyLower>() = d.transpose();
  return d;
}

std::vector<RepetitionGroup> mine_sequence(const EmbeddingSequence& emb, const MinerConfig& cfg, int threads) {
  validate(cfg);
  if (emb.vectors.rows() < cfg.kernel_size) return {};
  const auto filtered = filter_diagonal(self_similarity(emb, threads), cfg);
  auto groups = mine_repetitions(filtered, cfg);
  const bool has_indices = emb.frame_indices.size() == static_cast<std::size_t>(emb.vectors.rows());
  auto to_frame = [&](int row) { return has_indices ? emb.frame_indices[row] : row; };
  for (auto& g : groups) {
    g.video_id = emb.video_id;
    g.anchor_index = to_frame(g.anchor_index);
    for (int& r : g.repeat_indices) r = to_frame(r);
  }
  return groups;
}

std::vector<sampling::TemporalTuple> sample_repetition_tuples(const std::vector<RepetitionGroup>& groups,
                                                              const MinerConfig& cfg,
                                                              const sampling::SamplerConfig& sampler_cfg) {
  using sampling::TemporalTuple;
  using sampling::TupleOrigin;
  std::vector<TemporalTuple> out;
  for (const auto& g : groups) {
    if (g.repeat_indices.empty()) throw Error("repetition group without repeats in " + g.video_id);
    std::vector<int> members = g.repeat_indices;
    members.push_back(g.anchor_index);
    std::sort(members.begin(), members.end());

    std::vector<int> eligible;
    for (std::size_t m = 0; m + 1 < members.size(); ++m) {
      for (int f = members[m] + 1; f < members[m + 1]; ++f) {
        if (f - members[m] >= cfg.group_gap && members[m + 1] - f >= cfg.group_gap) eligible.push_back(f);
      }
    }

    Rng rng = make_rng(sampler_cfg.seed, "repetition/" + g.video_id, static_cast<std::uint64_t>(g.anchor_index));
    const int wanted = std::min<int>(sampler_cfg.negatives_per_positive, static_cast<int>(eligible.size()));
    for (int r : g.repeat_indices) {
      out.push_back({g.video_id, g.anchor_index, r, r - g.anchor_index, 1, TupleOrigin::Repetition});
      std::vector<int> pool = eligible;
      for (int k = 0; k < wanted; ++k) {
        const std::size_t pick = k + uniform_index(rng, pool.size() - k);
        std::swap(pool[k], pool[pick]);
        out.push_back({g.video_id, g.anchor_index, pool[k], pool[k] - g.anchor_index, 0,
                       TupleOrigin::Repetition});
      }
    }
  }
  return out;
}

void write_groups(const std::filesystem::path& path, const std::vector<RepetitionGroup>& groups) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& g : groups) {
    out << g.video_id << '\t' << g.anchor_index << '\t';
    for (std::size_t i = 0; i < g.repeat_indices.size(); ++i) {
      out << (i ? "," : "") << g.repeat_indices[i];
    }
    out << '\n';
  }
}

std::vector<RepetitionGroup> read_groups(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("repetition groups not found: " + path.string());
  std::vector<RepetitionGroup> groups;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = split(line, '\t');
    if (f.size() != 3) throw Error("malformed repetition group at " + where);
    RepetitionGroup g{std::string(f[0]), parse_int(f[1], where), {}};
    for (auto r : split(f[2], ',')) g.repeat_indices.push_back(parse_int(r, where));
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace poseforge::rep
