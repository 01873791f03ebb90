#pragma once

#include <Eigen/Dense>

#include <array>
#include <map>
#include <string>
#include <vector>

#include "poseforge/dataset.hpp"

namespace poseforge::eval {

using PoseVector = Joints;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Poses are normalized into the network's 64 x 64 input square.
inline constexpr double kNormalizedSize = 64.0;

struct RetrievalConfig {
  std::vector<int> ks{1, 5, 10, 20};
  int nn_rank_cutoff = 50;
  double rel_margin = 10.0 * 64.0 / 227.0;
  double pcp_fraction = 0.5;
  double pckh_fraction = 0.5;
};

void validate(const RetrievalConfig& cfg);

/// Probability that a random positive outscores a random negative, ties counting 1/2,
/// from the rank sum over the pooled scores.
double roc_auc(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores);

/// Maps joints into [0, size]^2 using the smallest square enclosing them (centered on the
/// shorter extent). Throws when all joints coincide.
PoseVector normalize_pose(const Joints& joints, double size = kNormalizedSize);

/// Mean per-joint Euclidean distance.
double pose_distance(const PoseVector& a, const PoseVector& b);

/// Embeddings addressable by frame.
struct EmbeddingTable {
  std::map<FrameRef, Eigen::Index> rows;
  Matrix<float> vectors;

  Eigen::Index row(const FrameRef& ref) const;
};

struct PostureResult {
  std::vector<double> per_exemplar;
  double mean = 0;
};

/// Per exemplar: AuC of similarity = -||e(q)/|e(q)| - e(x)/|e(x)||| for positives versus
/// negatives; mean over exemplars.
PostureResult posture_auc(const EmbeddingTable& table, const std::vector<BenchmarkExemplar>& exemplars);

struct RetrievalAtK {
  int k = 0;
  double mean_pose_distance = 0;
  double hitrate_nn = 0;
  double hitrate_rel = 0;
};

/// Test items ranked by embedding distance (ties: lower index first). For each K:
/// mean pose distance over queries and their top K; NN hit when a top-K item is among the
/// query's nn_rank_cutoff pose-space nearest (ties: lower index); relative hit when a top-K
/// item is within rel_margin of the query's minimum pose distance to the test set.
std::vector<RetrievalAtK> retrieval_metrics(const Matrix<double>& query_embeddings,
                                            const std::vector<PoseVector>& query_poses,
                                            const Matrix<double>& test_embeddings,
                                            const std::vector<PoseVector>& test_poses, const RetrievalConfig& cfg,
                                            int threads = 1);

/// Index of the embedding-nearest test row; ties go to the lower index.
Eigen::Index nearest_index(const Eigen::Ref<const Eigen::RowVectorXd>& query, const Matrix<double>& test_embeddings);

/// Pose of the embedding-nearest test item.
PoseVector nn_pose_transfer(const Eigen::Ref<const Eigen::RowVectorXd>& query, const Matrix<double>& test_embeddings,
                            const std::vector<PoseVector>& test_poses);

struct Part {
  std::string name;
  std::string category;
  int a = 0;
  int b = 0;
};

/// Head, torso sides, upper/lower arms and upper/lower legs over the 14-joint set.
const std::vector<Part>& default_parts();

struct PartResult {
  bool evaluated = false;  // false for zero-length ground-truth parts
  bool correct = false;
};

struct PcpResult {
  std::vector<PartResult> parts;
  int skipped = 0;
  double mean = 0;  // over evaluated parts
};

/// A part is correct when both endpoint errors are at most fraction x ground-truth length.
PcpResult pcp(const PoseVector& predicted, const PoseVector& gt, const std::vector<Part>& parts,
              double fraction = 0.5);

struct PckhResult {
  std::array<bool, kNumJoints> correct{};
  double total = 0;
};

/// A joint is correct when its error is at most fraction x the head-neck length.
PckhResult pckh(const PoseVector& predicted, const PoseVector& gt, double fraction = 0.5);

}  // namespace poseforge::eval
