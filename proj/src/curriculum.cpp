#include "poseforge/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "poseforge/io.hpp"

namespace poseforge::curriculum {

std::size_t CurriculumSchedule::size() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

std::map<SampleId, int> CurriculumSchedule::block_index() const {
  std::map<SampleId, int> index;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (const auto& id : blocks[b]) index.emplace(id, static_cast<int>(b));
  }
  return index;
}

void validate_fractions(const std::vector<double>& fractions) {
  if (fractions.empty()) throw ConfigError("curriculum: no block fractions given");
  const double total = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  if (std::abs(total - 100.0) > 1e-9) throw ConfigError("curriculum: fractions must sum to 100");
  for (double f : fractions) {
    if (!(f > 0) || f > 25.0) throw ConfigError("curriculum: each fraction must be in (0, 25]");
  }
  if (std::abs(fractions.front() - 5.0) > 2.5) {
    throw ConfigError("curriculum: the first block must hold about 5% of the samples");
  }
}

CurriculumSchedule build_curriculum(const std::vector<flow::MotionScore>& scores,
                                    const std::vector<double>& fractions, int update_interval) {
  validate_fractions(fractions);
  if (update_interval < 1) throw ConfigError("curriculum: update_interval must be >= 1");
  if (scores.size() < fractions.size()) {
    throw Error("curriculum: " + std::to_string(scores.size()) + " samples cannot fill " +
                std::to_string(fractions.size()) + " blocks");
  }
  std::vector<const flow::MotionScore*> order;
  order.reserve(scores.size());
  for (const auto& s : scores) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const flow::MotionScore* a, const flow::MotionScore* b) {
    if (a->fg_bg_ratio != b->fg_bg_ratio) return a->fg_bg_ratio > b->fg_bg_ratio;
    if (a->video_id != b->video_id) return a->video_id < b->video_id;
    return a->frame_index < b->frame_index;
  });

  CurriculumSchedule schedule;
  schedule.update_interval = update_interval;
  schedule.fractions = fractions;
  const std::size_t n = order.size();
  std::size_t pos = 0;
  for (std::size_t b = 0; b < fractions.size(); ++b) {
    std::size_t count = static_cast<std::size_t>(std::floor(fractions[b] * static_cast<double>(n) / 100.0));
    if (b + 1 == fractions.size()) count = n - pos;
    std::vector<SampleId> ids;
    std::vector<double> ratios;
    for (std::size_t i = 0; i < count; ++i, ++pos) {
      ids.push_back({order[pos]->video_id, order[pos]->frame_index});
      ratios.push_back(order[pos]->fg_bg_ratio);
    }
    schedule.blocks.push_back(std::move(ids));
    schedule.ratios.push_back(std::move(ratios));
  }
  return schedule;
}

int active_block_limit(const CurriculumSchedule& schedule, long iteration) {
  if (schedule.blocks.empty()) return -1;
  const long step = std::max(0L, iteration) / std::max(1, schedule.update_interval);
  return static_cast<int>(std::min<long>(step, static_cast<long>(schedule.blocks.size()) - 1));
}

std::set<SampleId> active_pool(const CurriculumSchedule& schedule, long iteration) {
  std::set<SampleId> pool;
  const int k = active_block_limit(schedule, iteration);
  for (int b = 0; b <= k; ++b) pool.insert(schedule.blocks[b].begin(), schedule.blocks[b].end());
  return pool;
}

void write_schedule(const std::filesystem::path& path, const CurriculumSchedule& schedule) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t b = 0; b < schedule.blocks.size(); ++b) {
    for (std::size_t i = 0; i < schedule.blocks[b].size(); ++i) {
      out << b << '\t' << to_string(schedule.blocks[b][i]) << '\t'
          << format_double(schedule.ratios[b][i]) << '\n';
    }
  }
}

CurriculumSchedule read_schedule(const std::filesystem::path& path, int update_interval) {
  std::ifstream in(path);
  if (!in) throw ConfigError("curriculum file not found: " + path.string());
  CurriculumSchedule schedule;
  schedule.update_interval = update_interval;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = split(line, '\t');
    if (f.size() != 3) throw Error("malformed curriculum record at " + where);
    const int block = parse_int(f[0], where);
    const auto colon = f[1].rfind(':');
    if (colon == std::string_view::npos || block < 0) throw Error("malformed sample id at " + where);
    if (static_cast<std::size_t>(block) >= schedule.blocks.size()) {
      schedule.blocks.resize(block + 1);
      schedule.ratios.resize(block + 1);
    }
    schedule.blocks[block].push_back({std::string(f[1].substr(0, colon)), parse_int(f[1].substr(colon + 1), where)});
    schedule.ratios[block].push_back(parse_double(f[2], where));
  }
  const double n = static_cast<double>(schedule.size());
  for (const auto& b : schedule.blocks) schedule.fractions.push_back(n > 0 ? 100.0 * b.size() / n : 0.0);
  return schedule;
}

}  // namespace poseforge::curriculum
