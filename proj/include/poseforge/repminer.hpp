#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "poseforge/dataset.hpp"
#include "poseforge/sampling.hpp"

namespace poseforge::rep {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-video embeddings, one row per frame in clip order.
struct EmbeddingSequence {
  std::string video_id;
  std::vector<int> frame_indices;
  Matrix<float> vectors;
  bool normalized = false;
};

/// Divides each row by its Euclidean norm; zero rows stay zero.
template <typename Derived>
void normalize_rows(Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto norm = m.row(i).norm();
    if (norm > 0) m.row(i) /= norm;
  }
}

struct MinerConfig {
  int kernel_size = 5;
  int band = 5;
  double threshold_percentile = 10.0;
  int min_separation = 5;
  int group_gap = 3;
};

void validate(const MinerConfig& cfg);

struct RepetitionGroup {
  std::string video_id;
  int anchor_index = 0;
  std::vector<int> repeat_indices;

  bool operator==(const RepetitionGroup&) const = default;
};

/// Pairwise Euclidean distances between rows. Symmetric with an exactly zero diagonal;
/// rows are split over `threads` without affecting the result.
Matrix<float> self_similarity(const EmbeddingSequence& emb, int threads = 1);

/// Averages along the (1,1) direction: out(i,j) = mean_k m(i+k, j+k) for |k| <= kernel_size/2,
/// with indices clamped to the border. Suppresses entries that are not part of an
/// off-diagonal streak.
template <typename Scalar>
Matrix<Scalar> filter_diagonal(const Matrix<Scalar>& m, const MinerConfig& cfg);

/// Row-wise minima of the filtered distances below the threshold_percentile-th percentile of
/// all entries at least `band` away from the diagonal; selected columns are kept
/// min_separation apart greedily by ascending distance. Indices are matrix rows.
template <typename Scalar>
std::vector<RepetitionGroup> mine_repetitions(const Matrix<Scalar>& filtered, const MinerConfig& cfg);

/// Full pipeline for one video: distances, filter, mining; indices mapped to frame_index.
std::vector<RepetitionGroup> mine_sequence(const EmbeddingSequence& emb, const MinerConfig& cfg,
                                           int threads = 1);

/// Positives pair the anchor with each repeat; each positive gets negatives_per_positive
/// negatives from frames strictly between consecutive group members and at least group_gap
/// from every member.
std::vector<sampling::TemporalTuple> sample_repetition_tuples(const std::vector<RepetitionGroup>& groups,
                                                              const MinerConfig& cfg,
                                                              const sampling::SamplerConfig& sampler_cfg);

/// `video_id<TAB>anchor<TAB>r1,r2,...`
void write_groups(const std::filesystem::path& path, const std::vector<RepetitionGroup>& groups);
std::vector<RepetitionGroup> read_groups(const std::filesystem::path& path);

// ---------------------------------------------------------------------------------------------

template <typename Scalar>
Matrix<Scalar> filter_diagonal(const Matrix<Scalar>& m, const MinerConfig& cfg) {
  validate(cfg);
  const Eigen::Index n = m.rows();
  if (m.cols() != n) throw Error("filter_diagonal: matrix must be square");
  if (n < cfg.kernel_size) throw Error("filter_diagonal: matrix smaller than the kernel");
  const int half = cfg.kernel_size / 2;
  const Scalar weight = Scalar(1) / Scalar(cfg.kernel_size);
  Matrix<Scalar> out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      Scalar acc = 0;
      for (int k = -half; k <= half; ++k) {
        const Eigen::Index r = std::clamp<Eigen::Index>(i + k, 0, n - 1);
        const Eigen::Index c = std::clamp<Eigen::Index>(j + k, 0, n - 1);
        acc += m(r, c);
      }
      out(i, j) = acc * weight;
    }
  }
  return out;
}

template <typename Scalar>
std::vector<RepetitionGroup> mine_repetitions(const Matrix<Scalar>& filtered, const MinerConfig& cfg) {
  validate(cfg);
  const Eigen::Index n = filtered.rows();
  if (filtered.cols() != n) throw Error("mine_repetitions: matrix must be square");
  std::vector<Scalar> off_band;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(i - j) >= cfg.band) off_band.push_back(filtered(i, j));
    }
  }
  std::vector<RepetitionGroup> groups;
  if (off_band.empty()) return groups;

  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(
      std::ceil(cfg.threshold_percentile / 100.0 * static_cast<double>(off_band.size())));
  const std::size_t k = std::clamp<std::size_t>(rank, 1, off_band.size()) - 1;
  std::nth_element(off_band.begin(), off_band.begin() + static_cast<std::ptrdiff_t>(k), off_band.end());
  const Scalar threshold = off_band[k];

  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> candidates;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(i - j) < cfg.band || filtered(i, j) > threshold) continue;
      const bool left_ok = j == 0 || filtered(i, j) <= filtered(i, j - 1);
      const bool right_ok = j == n - 1 || filtered(i, j) <= filtered(i, j + 1);
      if (left_ok && right_ok) candidates.push_back(j);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return filtered(i, a) < filtered(i, b); });
    std::vector<int> chosen;
    for (Eigen::Index j : candidates) {
      if (std::abs(j - i) < cfg.min_separation) continue;
      const bool clear = std::all_of(chosen.begin(), chosen.end(), [&](int c) {
        return std::abs(static_cast<Eigen::Index>(c) - j) >= cfg.min_separation;
      });
      if (clear) chosen.push_back(static_cast<int>(j));
    }
    if (chosen.empty()) continue;
    std::sort(chosen.begin(), chosen.end());
    groups.push_back({"", static_cast<int>(i), std::move(chosen)});
  }
  return groups;
}

}  // namespace poseforge::rep
