#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "oracles.hpp"
#include "poseforge/evalharness.hpp"

using namespace poseforge;
using namespace poseforge::eval;

namespace {

double normal(Rng& rng) { return std::normal_distribution<double>()(rng); }

Joints random_pose(Rng& rng, double scale = 64) {
  Joints j;
  for (int r = 0; r < kNumJoints; ++r) {
    j(r, 0) = uniform01(rng) * scale;
    j(r, 1) = uniform01(rng) * scale;
  }
  return j;
}

Joints shifted(const Joints& p, double dx) {
  Joints out = p;
  out.col(0).array() += dx;
  return out;
}

Matrix<double> random_embeddings(Rng& rng, int n, int d) {
  Matrix<double> m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) m(i, c) = uniform01(rng) * 2 - 1;
  }
  return m;
}

EmbeddingTable table_from(const std::vector<FrameRef>& refs, const Matrix<float>& vectors) {
  EmbeddingTable t;
  t.vectors = vectors;
  for (std::size_t i = 0; i < refs.size(); ++i) t.rows[refs[i]] = static_cast<Eigen::Index>(i);
  return t;
}

}  // namespace

TEST(RocAuc, HandExamples) {
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.8}, {0.1, 0.2}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.5}, {0.5}), 0.5);
  EXPECT_DOUBLE_EQ(roc_auc({0.1, 0.2}, {0.9, 0.8}), 0.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.4, 0.9}, {0.5, 0.1}), 0.75);
  EXPECT_THROW(roc_auc({}, {1.0}), Error);
  EXPECT_THROW(roc_auc({1.0}, {}), Error);
}

TEST(RocAuc, MatchesPairCounting) {
  Rng rng = make_rng(4, "auc");
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> pos(1 + uniform_index(rng, 30)), neg(1 + uniform_index(rng, 30));
    // Coarse values so ties are common.
    for (double& x : pos) x = std::floor(uniform01(rng) * 8);
    for (double& x : neg) x = std::floor(uniform01(rng) * 6);
    EXPECT_NEAR(roc_auc(pos, neg), oracle::auc_pairs(pos, neg), 1e-12);
  }
}

TEST(NormalizePose, FitsTheSquare) {
  Joints j = Joints::Zero();
  for (int r = 0; r < kNumJoints; ++r) {
    j(r, 0) = 100 + r;
    j(r, 1) = 50 + 2 * r;
  }
  const auto n = normalize_pose(j);
  EXPECT_NEAR(n.col(1).minCoeff(), 0, 1e-12);
  EXPECT_NEAR(n.col(1).maxCoeff(), 64, 1e-12);
  EXPECT_NEAR(n.col(0).minCoeff() + n.col(0).maxCoeff(), 64, 1e-12);
  EXPECT_NEAR(n.col(0).maxCoeff() - n.col(0).minCoeff(), 32, 1e-12);
  EXPECT_TRUE(normalize_pose(shifted(j * 3, 17)).isApprox(n, 1e-12));
  EXPECT_THROW(normalize_pose(Joints::Constant(2.0)), Error);
}

TEST(PoseDistance, Examples) {
  const Joints a = Joints::Zero();
  Joints b = Joints::Zero();
  b.col(0).setConstant(3);
  b.col(1).setConstant(4);
  EXPECT_DOUBLE_EQ(pose_distance(a, b), 5.0);
  b.row(0) << 14 * 3, 14 * 4;
  b.bottomRows(kNumJoints - 1).setZero();
  EXPECT_DOUBLE_EQ(pose_distance(a, b), 5.0);
  Rng rng = make_rng(1, "pd");
  for (int i = 0; i < 20; ++i) {
    const auto p = random_pose(rng), q = random_pose(rng);
    EXPECT_NEAR(pose_distance(p, q), oracle::pose_distance(p, q), 1e-12);
    EXPECT_NEAR(pose_distance(p, q), pose_distance(q, p), 1e-12);
  }
}

TEST(PostureAuc, OracleEmbeddingsScoreNearOne) {
  // Embedding = pose angle on a circle; positives are near in angle, negatives far.
  Rng rng = make_rng(2, "posture");
  std::vector<FrameRef> refs;
  Matrix<float> vec(400, 2);
  for (int i = 0; i < 400; ++i) {
    refs.push_back({"v", i});
    const double a = 2 * std::numbers::pi * i / 400.0;
    vec(i, 0) = static_cast<float>(std::cos(a));
    vec(i, 1) = static_cast<float>(std::sin(a));
  }
  const auto table = table_from(refs, vec);
  std::vector<BenchmarkExemplar> ex;
  for (int q = 0; q < 400; q += 20) {
    BenchmarkExemplar e{{"v", q}, {}, {}};
    for (int d = 1; d <= 5; ++d) e.positives.push_back({"v", (q + d) % 400});
    for (int d = 100; d <= 200; d += 25) e.negatives.push_back({"v", (q + d) % 400});
    ex.push_back(e);
  }
  const auto r = posture_auc(table, ex);
  ASSERT_EQ(r.per_exemplar.size(), ex.size());
  EXPECT_GE(r.mean, 0.99);
}

TEST(PostureAuc, RandomEmbeddingsScoreNearHalf) {
  Rng rng = make_rng(3, "posture");
  const int n = 2000;
  std::vector<FrameRef> refs;
  Matrix<float> vec(n, 16);
  for (int i = 0; i < n; ++i) {
    refs.push_back({"v", i});
    for (int c = 0; c < 16; ++c) vec(i, c) = static_cast<float>(normal(rng));
  }
  const auto table = table_from(refs, vec);
  std::vector<BenchmarkExemplar> ex;
  for (int q = 0; q < 60; ++q) {
    BenchmarkExemplar e{{"v", q}, {}, {}};
    for (int k = 0; k < 10; ++k) e.positives.push_back({"v", static_cast<int>(60 + uniform_index(rng, n - 60))});
    for (int k = 0; k < 20; ++k) e.negatives.push_back({"v", static_cast<int>(60 + uniform_index(rng, n - 60))});
    ex.push_back(e);
  }
  const double m = posture_auc(table, ex).mean;
  EXPECT_GT(m, 0.4);
  EXPECT_LT(m, 0.6);
}

TEST(PostureAuc, SingleExemplarMatchesOracle) {
  std::vector<FrameRef> refs = {{"v", 0}, {"v", 1}, {"v", 2}, {"v", 3}, {"v", 4}};
  Matrix<float> vec(5, 2);
  vec << 1, 0, 2, 0.2f, 1, 1, 0, 1, -1, 0.1f;
  const auto table = table_from(refs, vec);
  const BenchmarkExemplar e{{"v", 0}, {{"v", 1}, {"v", 3}}, {{"v", 2}, {"v", 4}}};
  auto sim = [&](int i) {
    const Eigen::RowVector2d q = vec.row(0).cast<double>().normalized();
    return -(q - vec.row(i).cast<double>().normalized()).norm();
  };
  const auto r = posture_auc(table, {e});
  EXPECT_NEAR(r.mean, oracle::auc_pairs({sim(1), sim(3)}, {sim(2), sim(4)}), 1e-12);
  EXPECT_THROW(posture_auc(table, {BenchmarkExemplar{{"w", 0}, {{"v", 1}}, {{"v", 2}}}}), Error);
}

TEST(Retrieval, PoseEmbeddingsFindTheNearestPose) {
  Rng rng = make_rng(5, "ret");
  std::vector<Joints> tp, qp;
  Matrix<double> te(80, 2 * kNumJoints), qe(10, 2 * kNumJoints);
  for (int i = 0; i < 80; ++i) {
    tp.push_back(random_pose(rng));
    te.row(i) = Eigen::Map<const Eigen::RowVectorXd>(tp.back().data(), 2 * kNumJoints);
  }
  for (int i = 0; i < 10; ++i) {
    qp.push_back(shifted(tp[static_cast<std::size_t>(i * 7)], 0.5));
    qe.row(i) = Eigen::Map<const Eigen::RowVectorXd>(qp.back().data(), 2 * kNumJoints);
  }
  const auto rows = retrieval_metrics(qe, qp, te, tp, RetrievalConfig{});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].k, 1);
  EXPECT_DOUBLE_EQ(rows[0].hitrate_nn, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].hitrate_rel, 1.0);
  EXPECT_NEAR(rows[0].mean_pose_distance, 0.5, 1e-12);
}

TEST(Retrieval, RelativeMarginMiss) {
  Rng rng = make_rng(6, "ret");
  const Joints base = random_pose(rng);
  std::vector<Joints> tp;
  Matrix<double> te(4, 1);
  tp.push_back(shifted(base, 12));
  te(0, 0) = 5;
  tp.push_back(shifted(base, 20));
  te(1, 0) = 0.1;
  tp.push_back(shifted(base, 30));
  te(2, 0) = 3;
  tp.push_back(shifted(base, 40));
  te(3, 0) = 4;
  Matrix<double> qe(1, 1);
  qe(0, 0) = 0;
  RetrievalConfig cfg;
  cfg.ks = {1, 2};
  cfg.nn_rank_cutoff = 1;
  const auto rows = retrieval_metrics(qe, {base}, te, tp, cfg);
  EXPECT_NEAR(rows[0].mean_pose_distance, 20, 1e-12);
  EXPECT_EQ(rows[0].hitrate_nn, 0.0);
  EXPECT_EQ(rows[0].hitrate_rel, 0.0);
  EXPECT_NEAR(rows[1].mean_pose_distance, 25, 1e-12);
  cfg.rel_margin = 8.5;
  EXPECT_EQ(retrieval_metrics(qe, {base}, te, tp, cfg)[0].hitrate_rel, 1.0);
}

TEST(Retrieval, MatchesBruteForce) {
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng rng = make_rng(seed, "ret-bf");
    std::vector<Joints> tp, qp;
    for (int i = 0; i < 60; ++i) tp.push_back(random_pose(rng));
    for (int i = 0; i < 3; ++i) qp.push_back(random_pose(rng));
    const auto te = random_embeddings(rng, 60, 5), qe = random_embeddings(rng, 3, 5);
    const RetrievalConfig cfg;
    const auto got = retrieval_metrics(qe, qp, te, tp, cfg, 2);
    const auto want = oracle::retrieval(qe, qp, te, tp, cfg.ks, cfg.nn_rank_cutoff, cfg.rel_margin);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].k, want[i].k);
      EXPECT_NEAR(got[i].mean_pose_distance, want[i].mean_pose_distance, 1e-9);
      EXPECT_NEAR(got[i].hitrate_nn, want[i].hitrate_nn, 1e-12);
      EXPECT_NEAR(got[i].hitrate_rel, want[i].hitrate_rel, 1e-12);
    }
  }
}

TEST(Retrieval, Errors) {
  Rng rng = make_rng(7, "ret");
  std::vector<Joints> tp(50, random_pose(rng)), qp(1, random_pose(rng));
  const auto te = random_embeddings(rng, 50, 3), qe = random_embeddings(rng, 1, 3);
  EXPECT_THROW(retrieval_metrics(qe, qp, te, tp, RetrievalConfig{}), Error);
  EXPECT_THROW(retrieval_metrics(random_embeddings(rng, 1, 4), qp, te, tp, RetrievalConfig{}), Error);
  RetrievalConfig bad;
  bad.ks = {};
  EXPECT_THROW(validate(bad), ConfigError);
  bad = RetrievalConfig{};
  bad.rel_margin = 0;
  EXPECT_THROW(validate(bad), ConfigError);
}

TEST(NnPoseTransfer, NearestAndTies) {
  Rng rng = make_rng(8, "nn");
  std::vector<Joints> tp = {random_pose(rng), random_pose(rng), random_pose(rng)};
  Matrix<double> te(3, 2);
  te << 1, 0, 0, 1, 0, 1;
  const Eigen::RowVector2d q(0, 1);
  EXPECT_EQ(nearest_index(q, te), 1);
  EXPECT_TRUE(nn_pose_transfer(q, te, tp).isApprox(tp[1]));
  const Eigen::RowVector2d exact(1, 0);
  EXPECT_EQ(pose_distance(nn_pose_transfer(exact, te, tp), tp[0]), 0.0);
  EXPECT_THROW(nn_pose_transfer(q, te, {tp[0]}), Error);
  EXPECT_THROW(nearest_index(q, Matrix<double>(0, 2)), Error);
}

TEST(Pcp, ExamplesAndBruteForce) {
  Joints gt = Joints::Zero();
  for (int j = 0; j < kNumJoints; ++j) gt.row(j) << j * 10.0, (j % 3) * 7.0;
  EXPECT_DOUBLE_EQ(pcp(gt, gt, default_parts()).mean, 1.0);
  EXPECT_EQ(default_parts().size(), 11u);

  // Head part of length 10: a 5 px endpoint error is correct, 5.01 is not.
  Joints head_gt = gt;
  head_gt.row(kHead) << 0, 0;
  head_gt.row(kNeck) << 10, 0;
  const std::vector<Part> head = {default_parts()[0]};
  EXPECT_TRUE(pcp(shifted(head_gt, 5), head_gt, head).parts[0].correct);
  EXPECT_FALSE(pcp(shifted(head_gt, 5.01), head_gt, head).parts[0].correct);

  Joints degenerate = gt;
  degenerate.row(kNeck) = degenerate.row(kHead);
  const auto r = pcp(gt, degenerate, head);
  EXPECT_FALSE(r.parts[0].evaluated);
  EXPECT_EQ(r.skipped, 1);

  Rng rng = make_rng(9, "pcp");
  for (int i = 0; i < 30; ++i) {
    const auto g = random_pose(rng);
    Joints p = g;
    for (int j = 0; j < kNumJoints; ++j) p.row(j) += Eigen::RowVector2d(normal(rng), normal(rng)) * 8;
    const auto got = pcp(p, g, default_parts());
    const auto want = oracle::pcp(p, g, default_parts(), 0.5);
    for (std::size_t k = 0; k < want.size(); ++k) {
      EXPECT_EQ(got.parts[k].evaluated, want[k].evaluated);
      EXPECT_EQ(got.parts[k].correct, want[k].correct);
    }
  }
}

TEST(Pckh, ExamplesAndBruteForce) {
  Joints gt = Joints::Zero();
  for (int j = 0; j < kNumJoints; ++j) gt.row(j) << j * 5.0, 0;
  // Head-neck length 5, threshold 2.5.
  EXPECT_DOUBLE_EQ(pckh(shifted(gt, 2.5), gt).total, 1.0);
  EXPECT_DOUBLE_EQ(pckh(shifted(gt, 2.6), gt).total, 0.0);
  Joints bad = gt;
  bad.row(kNeck) = bad.row(kHead);
  EXPECT_THROW(pckh(gt, bad), Error);

  Rng rng = make_rng(10, "pckh");
  for (int i = 0; i < 30; ++i) {
    const auto g = random_pose(rng);
    Joints p = g;
    for (int j = 0; j < kNumJoints; ++j) p.row(j) += Eigen::RowVector2d(normal(rng), normal(rng)) * 10;
    const auto got = pckh(p, g);
    const auto want = oracle::pckh(p, g, 0.5);
    for (int j = 0; j < kNumJoints; ++j) EXPECT_EQ(got.correct[static_cast<std::size_t>(j)], want[static_cast<std::size_t>(j)]);
  }
}
