#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <vector>

#include "poseforge/common.hpp"
#include "poseforge/flow.hpp"

namespace poseforge::curriculum {

using SampleId = FrameRef;

/// Exponential growth from 5% capped at 25% over seven releases.
inline const std::vector<double> kDefaultFractions = {5, 7, 10, 14, 19, 20, 25};

struct CurriculumSchedule {
  std::vector<std::vector<SampleId>> blocks;  // easiest (highest fg/bg ratio) first
  std::vector<std::vector<double>> ratios;    // parallel to blocks
  int update_interval = 250;
  std::vector<double> fractions;

  std::size_t size() const;
  /// Block index of every sample.
  std::map<SampleId, int> block_index() const;
};

/// Percentages must be positive, sum to 100, each at most 25, with the first within 2.5 of 5.
void validate_fractions(const std::vector<double>& fractions);

/// Sorts by descending ratio, ties by (video_id, frame_index), and cuts blocks of
/// floor(f_i * N / 100) samples; the remainder joins the last block.
CurriculumSchedule build_curriculum(const std::vector<flow::MotionScore>& scores,
                                    const std::vector<double>& fractions, int update_interval);

/// Number of released blocks minus one at `iteration`: min(iteration / update_interval, blocks-1).
int active_block_limit(const CurriculumSchedule& schedule, long iteration);

/// Union of blocks 0..active_block_limit(iteration).
std::set<SampleId> active_pool(const CurriculumSchedule& schedule, long iteration);

/// `block<TAB>video_id:frame_index<TAB>ratio`, one line per sample.
void write_schedule(const std::filesystem::path& path, const CurriculumSchedule& schedule);
CurriculumSchedule read_schedule(const std::filesystem::path& path, int update_interval);

}  // namespace poseforge::curriculum
