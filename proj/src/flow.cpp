#include "poseforge/flow.hpp"

#include <cstring>
#include <fstream>

#include "poseforge/io.hpp"

namespace poseforge::flow {

namespace detail {

void for_row_blocks(Eigen::Index rows, int threads,
                    const std::function<void(Eigen::Index, Eigen::Index)>& fn) {
  const Eigen::Index blocks = std::clamp<Eigen::Index>(threads, 1, rows);
  if (blocks == 1) {
    fn(0, rows);
    return;
  }
  parallel_for(static_cast<std::size_t>(blocks), threads, [&](std::size_t b) {
    const Eigen::Index y0 = rows * static_cast<Eigen::Index>(b) / blocks;
    const Eigen::Index y1 = rows * static_cast<Eigen::Index>(b + 1) / blocks;
    fn(y0, y1);
  });
}

}  // namespace detail

std::vector<MotionScore> score_clip(const VideoClip& clip, const FlowConfig& cfg) {
  const std::size_t n = clip.frames.size();
  if (n < 2) return {};
  std::vector<MotionScore> scores(n - 1);
  parallel_for(n - 1, cfg.threads, [&](std::size_t i) {
    const Frame& a = clip.frames[i];
    const Frame& b = clip.frames[i + 1];
    try {
      const auto flow = estimate_flow<float>(a.image, b.image, static_cast<float>(cfg.alpha), cfg.iterations);
      scores[i] = {clip.video_id, a.frame_index, fg_bg_ratio(flow, a.box)};
    } catch (const Error& e) {
      throw Error(clip.video_id + "/" + std::to_string(a.frame_index) + ": " + e.what());
    }
  });
  return scores;
}

std::vector<MotionScore> score_dataset(const DatasetManifest& manifest, const FlowConfig& cfg) {
  std::vector<MotionScore> out;
  for (const auto& rec : manifest.clips) {
    const auto scores = score_clip(load_clip(manifest, rec), cfg);
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

void write_grid_pair(const std::filesystem::path& path, const char (&magic)[5], const Grid<float>& first,
                     const Grid<float>& second) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(magic, 4);
  write_u32(out, static_cast<std::uint32_t>(first.rows()));
  write_u32(out, static_cast<std::uint32_t>(first.cols()));
  for (Eigen::Index i = 0; i < first.size(); ++i) write_f32(out, first.data()[i]);
  for (Eigen::Index i = 0; i < second.size(); ++i) write_f32(out, second.data()[i]);
}

void write_flow(const std::filesystem::path& path, const FlowField<float>& flow) {
  write_grid_pair(path, "PFLW", flow.u, flow.v);
}

FlowField<float> read_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PFLW", 4) != 0) {
    throw Error("not a PFLW flow file: " + path.string());
  }
  try {
    const auto rows = read_u32(in);
    const auto cols = read_u32(in);
    FlowField<float> flow{Grid<float>(rows, cols), Grid<float>(rows, cols)};
    for (Eigen::Index i = 0; i < flow.u.size(); ++i) flow.u.data()[i] = read_f32(in);
    for (Eigen::Index i = 0; i < flow.v.size(); ++i) flow.v.data()[i] = read_f32(in);
    return flow;
  } catch (const Error&) {
    throw Error("truncated PFLW flow file: " + path.string());
  }
}

void write_scores(const std::filesystem::path& path, const std::vector<MotionScore>& scores) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : scores) {
    out << s.video_id << '\t' << s.frame_index << '\t' << format_double(s.fg_bg_ratio) << '\n';
  }
}

std::vector<MotionScore> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("motion scores not found: " + path.string());
  std::vector<MotionScore> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = split(line, '\t');
    if (f.size() != 3) throw Error("malformed motion score at " + where);
    out.push_back({std::string(f[0]), parse_int(f[1], where), parse_double(f[2], where)});
  }
  return out;
}

}  // namespace poseforge::flow
