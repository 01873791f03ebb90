#include "poseforge/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace poseforge::eval {

namespace {

std::vector<Eigen::Index> rank_by(const std::vector<double>& keys) {
  std::vector<Eigen::Index> order(keys.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace

void validate(const RetrievalConfig& cfg) {
  if (cfg.ks.empty()) throw ConfigError("retrieval.k must list at least one value");
  for (int k : cfg.ks) {
    if (k < 1) throw ConfigError("retrieval.k values must be >= 1");
  }
  if (cfg.nn_rank_cutoff < 1) throw ConfigError("retrieval.nn_rank_cutoff must be >= 1");
  if (!(cfg.rel_margin > 0)) throw ConfigError("retrieval.rel_margin must be positive");
  if (!(cfg.pcp_fraction > 0) || !(cfg.pckh_fraction > 0)) throw ConfigError("pose fractions must be positive");
}

double roc_auc(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores) {
  if (pos_scores.empty() || neg_scores.empty()) throw Error("roc_auc: positive and negative lists must be nonempty");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  for (double s : pos_scores) items.push_back({s, true});
  for (double s : neg_scores) items.push_back({s, false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  // Midranks over tie groups, 1-based.
  double pos_rank_sum = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (items[k].positive) pos_rank_sum += midrank;
    }
    i = j;
  }
  const auto np = static_cast<double>(pos_scores.size());
  const auto nn = static_cast<double>(neg_scores.size());
  return (pos_rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

PoseVector normalize_pose(const Joints& joints, double size) {
  const Eigen::RowVector2d lo = joints.colwise().minCoeff();
  const Eigen::RowVector2d hi = joints.colwise().maxCoeff();
  const Eigen::RowVector2d extent = hi - lo;
  const double side = extent.maxCoeff();
  if (!(side > 0)) throw Error("normalize_pose: all joints coincide");
  const Eigen::RowVector2d origin = lo - (Eigen::RowVector2d::Constant(side) - extent) / 2.0;
  return ((joints.rowwise() - origin) * (size / side)).eval();
}

double pose_distance(const PoseVector& a, const PoseVector& b) {
  return (a - b).rowwise().norm().mean();
}

Eigen::Index EmbeddingTable::row(const FrameRef& ref) const {
  const auto it = rows.find(ref);
  if (it == rows.end()) throw Error("no embedding for frame " + to_string(ref));
  return it->second;
}

PostureResult posture_auc(const EmbeddingTable& table, const std::vector<BenchmarkExemplar>& exemplars) {
  auto unit = [&](const FrameRef& ref) {
    Eigen::RowVectorXd v = table.vectors.row(table.row(ref)).cast<double>();
    const double n = v.norm();
    if (n > 0) v /= n;
    return v;
  };
  PostureResult out;
  for (const auto& ex : exemplars) {
    const Eigen::RowVectorXd q = unit(ex.query);
    std::vector<double> pos, neg;
    for (const auto& p : ex.positives) pos.push_back(-(unit(p) - q).norm());
    for (const auto& n : ex.negatives) neg.push_back(-(unit(n) - q).norm());
    out.per_exemplar.push_back(roc_auc(pos, neg));
  }
  if (!out.per_exemplar.empty()) {
    out.mean = std::accumulate(out.per_exemplar.begin(), out.per_exemplar.end(), 0.0) /
               static_cast<double>(out.per_exemplar.size());
  }
  return out;
}

std::vector<RetrievalAtK> retrieval_metrics(const Matrix<double>& query_embeddings,
                                            const std::vector<PoseVector>& query_poses,
                                            const Matrix<double>& test_embeddings,
                                            const std::vector<PoseVector>& test_poses, const RetrievalConfig& cfg,
                                            int threads) {
  validate(cfg);
  const auto nq = static_cast<std::size_t>(query_embeddings.rows());
  const auto nt = static_cast<std::size_t>(test_embeddings.rows());
  if (query_poses.size() != nq || test_poses.size() != nt) {
    throw Error("retrieval_metrics: every item needs an embedding and a pose");
  }
  if (query_embeddings.cols() != test_embeddings.cols()) throw Error("retrieval_metrics: embedding widths differ");
  if (nt <= static_cast<std::size_t>(cfg.nn_rank_cutoff)) {
    throw Error("retrieval_metrics: test set of " + std::to_string(nt) + " items is not larger than the " +
                std::to_string(cfg.nn_rank_cutoff) + "-neighbor cutoff");
  }
  const int k_max = *std::max_element(cfg.ks.begin(), cfg.ks.end());
  if (static_cast<std::size_t>(k_max) > nt) throw Error("retrieval_metrics: K exceeds the test set size");

  struct QueryStats {
    std::vector<double> sum_dist;  // per K
    std::vector<bool> hit_nn, hit_rel;
  };
  std::vector<QueryStats> stats(nq);
  parallel_for(nq, threads, [&](std::size_t q) {
    std::vector<double> emb_dist(nt), pose_dist(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      emb_dist[t] = (query_embeddings.row(static_cast<Eigen::Index>(q)) -
                     test_embeddings.row(static_cast<Eigen::Index>(t)))
                        .norm();
      pose_dist[t] = pose_distance(query_poses[q], test_poses[t]);
    }
    const auto by_emb = rank_by(emb_dist);
    const auto by_pose = rank_by(pose_dist);
    std::vector<bool> in_pose_nn(nt, false);
    for (int r = 0; r < cfg.nn_rank_cutoff; ++r) in_pose_nn[static_cast<std::size_t>(by_pose[r])] = true;
    const double d_min = pose_dist[static_cast<std::size_t>(by_pose[0])];

    QueryStats& s = stats[q];
    for (int k : cfg.ks) {
      double sum = 0;
      bool nn = false, rel = false;
      for (int r = 0; r < k; ++r) {
        const auto t = static_cast<std::size_t>(by_emb[static_cast<std::size_t>(r)]);
        sum += pose_dist[t];
        nn = nn || in_pose_nn[t];
        rel = rel || pose_dist[t] <= d_min + cfg.rel_margin;
      }
      s.sum_dist.push_back(sum / k);
      s.hit_nn.push_back(nn);
      s.hit_rel.push_back(rel);
    }
  });

  std::vector<RetrievalAtK> out;
  for (std::size_t i = 0; i < cfg.ks.size(); ++i) {
    RetrievalAtK r{cfg.ks[i], 0, 0, 0};
    for (const auto& s : stats) {
      r.mean_pose_distance += s.sum_dist[i];
      r.hitrate_nn += s.hit_nn[i] ? 1.0 : 0.0;
      r.hitrate_rel += s.hit_rel[i] ? 1.0 : 0.0;
    }
    if (nq > 0) {
      r.mean_pose_distance /= static_cast<double>(nq);
      r.hitrate_nn /= static_cast<double>(nq);
      r.hitrate_rel /= static_cast<double>(nq);
    }
    out.push_back(r);
  }
  return out;
}

Eigen::Index nearest_index(const Eigen::Ref<const Eigen::RowVectorXd>& query, const Matrix<double>& test_embeddings) {
  if (test_embeddings.rows() == 0) throw Error("nearest_index: empty test set");
  if (test_embeddings.cols() != query.size()) throw Error("nearest_index: embedding widths differ");
  Eigen::Index best = 0;
  double best_d = (test_embeddings.row(0) - query).squaredNorm();
  for (Eigen::Index t = 1; t < test_embeddings.rows(); ++t) {
    const double d = (test_embeddings.row(t) - query).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = t;
    }
  }
  return best;
}

PoseVector nn_pose_transfer(const Eigen::Ref<const Eigen::RowVectorXd>& query, const Matrix<double>& test_embeddings,
                            const std::vector<PoseVector>& test_poses) {
  if (test_poses.size() != static_cast<std::size_t>(test_embeddings.rows())) {
    throw Error("nn_pose_transfer: every test item needs a pose");
  }
  return test_poses[static_cast<std::size_t>(nearest_index(query, test_embeddings))];
}

const std::vector<Part>& default_parts() {
  static const std::vector<Part> parts = {
      {"head", "head", kHead, kNeck},
      {"torso_left", "torso", kLeftShoulder, kLeftHip},
      {"torso_right", "torso", kRightShoulder, kRightHip},
      {"upper_arm_left", "upper_arms", kLeftShoulder, kLeftElbow},
      {"upper_arm_right", "upper_arms", kRightShoulder, kRightElbow},
      {"lower_arm_left", "lower_arms", kLeftElbow, kLeftWrist},
      {"lower_arm_right", "lower_arms", kRightElbow, kRightWrist},
      {"upper_leg_left", "upper_legs", kLeftHip, kLeftKnee},
      {"upper_leg_right", "upper_legs", kRightHip, kRightKnee},
      {"lower_leg_left", "lower_legs", kLeftKnee, kLeftAnkle},
      {"lower_leg_right", "lower_legs", kRightKnee, kRightAnkle},
  };
  return parts;
}

PcpResult pcp(const PoseVector& predicted, const PoseVector& gt, const std::vector<Part>& parts, double fraction) {
  PcpResult out;
  int evaluated = 0, correct = 0;
  for (const auto& part : parts) {
    if (part.a < 0 || part.a >= kNumJoints || part.b < 0 || part.b >= kNumJoints) {
      throw Error("pcp: part " + part.name + " references an invalid joint");
    }
    const double length = (gt.row(part.a) - gt.row(part.b)).norm();
    PartResult r;
    if (length > 0) {
      const double limit = fraction * length;
      r.evaluated = true;
      r.correct = (predicted.row(part.a) - gt.row(part.a)).norm() <= limit &&
                  (predicted.row(part.b) - gt.row(part.b)).norm() <= limit;
      ++evaluated;
      correct += r.correct ? 1 : 0;
    } else {
      ++out.skipped;
    }
    out.parts.push_back(r);
  }
  out.mean = evaluated > 0 ? static_cast<double>(correct) / evaluated : 0.0;
  return out;
}

PckhResult pckh(const PoseVector& predicted, const PoseVector& gt, double fraction) {
  const double head = (gt.row(kHead) - gt.row(kNeck)).norm();
  if (!(head > 0)) throw Error("pckh: zero-length head segment");
  PckhResult out;
  int correct = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    out.correct[static_cast<std::size_t>(j)] = (predicted.row(j) - gt.row(j)).norm() <= fraction * head;
    correct += out.correct[static_cast<std::size_t>(j)] ? 1 : 0;
  }
  out.total = static_cast<double>(correct) / kNumJoints;
  return out;
}

}  // namespace poseforge::eval
